"""face6d: perspective-projection 3D face geometry toolkit.

Library layout mirrors the pipeline: geometry/meshio hold the core
types and projections, uvmap/pfm the position-map rendering and its
file format, correspondence the pixel-to-vertex machinery, losses the
training objectives, pnp the pose solvers, metrics the evaluation
protocol, synth the synthetic-data harness, and cli the command-line
front end.
"""

from .correspondence import (
    CorrespondenceMatrix,
    PixelSet,
    barycentric_coordinates,
    build_gt_correspondence,
    corresponding_points,
    load_correspondence,
    positional_encoding_2d,
    rasterize_segmentation,
    sample_pixels,
    save_correspondence,
)
from .errors import Face6dError, UVOverlapWarning
from .geometry import (
    CameraIntrinsics,
    EulerAngles,
    OrthographicParams,
    RigidPose,
    TriangleMesh,
    compose,
    euler_to_rotation,
    fit_orthographic,
    project_orthographic,
    project_perspective,
    rotation_angle_deg,
    rotation_to_euler,
)
from .losses import (
    LossWeights,
    corr_l1,
    correspondence_loss,
    seg_cross_entropy,
    total_loss,
    uv_weighted_l1,
)
from .meshio import load_mesh, save_mesh
from .metrics import PoseMetrics, SampleResult, add_metric, aggregate_report, pose_mae
from .pfm import read_pfm, read_scalar_pfm, write_pfm, write_scalar_pfm
from .pnp import (
    PnPProblem,
    RansacConfig,
    RefineResult,
    refine_pose,
    reprojection_errors,
    solve_dlt,
    solve_epnp,
    solve_pnp_ransac,
)
from .synth import (
    DatasetConfig,
    NoiseModel,
    PoseRanges,
    SyntheticSample,
    corrupt,
    generate_dataset,
    load_manifest,
    load_sample,
    make_sample,
    make_synthetic_face,
    sample_pose,
)
from .uvmap import UVPositionMap, extract_vertices, render_uv_position_map

__version__ = "0.1.0"
