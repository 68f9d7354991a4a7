"""6DoF pose recovery from 2D-3D correspondences.

solve_epnp implements the control-point formulation: the world points
are re-expressed barycentrically against 4 control points (centroid +
principal axes; 3 in the planar case), the camera-frame control points
are found in the null space of the 2m x 12 projection system via an
eigen-decomposition of its 12 x 12 normal matrix, the null-space
combination coefficients (betas) are fixed by the inter-control-point
distances (relinearized N=1..3 cases plus a short Gauss-Newton over all
coefficients, multistarted so the 4-point minimal case is exact), and
the pose comes from orthogonal Procrustes alignment.  A seeded RANSAC
loop wraps it for robustness, followed by Gauss-Newton reprojection
refinement, and an independent DLT solver is provided as a test oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .correspondence import PixelSet
from .errors import (
    BehindCamera,
    DegenerateGeometry,
    InvariantViolation,
    NoConsensus,
)
from .geometry import CameraIntrinsics, RigidPose, _as_points, _freeze

_BETA_GN_ITERS = 15
_RELATIVE_RANK_TOL = 1e-10


@dataclass(frozen=True)
class PnPProblem:
    """Pixels, their canonical-space 3D points, and the camera intrinsics."""

    pixels: PixelSet
    world_points: np.ndarray
    intr: CameraIntrinsics

    def __post_init__(self):
        pts = _as_points(self.world_points, 3, "world_points")
        if len(pts) != len(self.pixels):
            raise InvariantViolation(
                f"{len(self.pixels)} pixels vs {len(pts)} world points"
            )
        object.__setattr__(self, "world_points", _freeze(pts))

    def __len__(self) -> int:
        return len(self.pixels)


@dataclass(frozen=True)
class RansacConfig:
    max_iterations: int = 100
    inlier_threshold_px: float = 2.0
    min_sample: int = 4
    seed: int = 0
    confidence: float = 0.99
    refine_iterations: int = 10  # 0 disables post-consensus refinement

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvariantViolation("max_iterations must be >= 1")
        if not self.inlier_threshold_px > 0:
            raise InvariantViolation("inlier threshold must be positive")
        if self.min_sample != 4:
            raise InvariantViolation("minimal sample size is fixed at 4")
        if not 0 < self.confidence < 1:
            raise InvariantViolation("confidence must lie in (0, 1)")
        if self.refine_iterations < 0:
            raise InvariantViolation("refine_iterations must be >= 0")


@dataclass(frozen=True)
class RefineResult:
    pose: RigidPose
    singular: bool
    rmse_history: tuple


def reprojection_errors(pose: RigidPose, problem: PnPProblem) -> np.ndarray:
    """Per-point pixel error; points at or behind the camera get +inf."""
    cam = problem.world_points @ pose.rotation.T + pose.translation
    z = cam[:, 2]
    ok = z > 1e-9
    err = np.full(len(cam), np.inf)
    if ok.any():
        intr = problem.intr
        u = intr.fx * cam[ok, 0] / z[ok] + intr.cx
        v = intr.fy * cam[ok, 1] / z[ok] + intr.cy
        delta = np.stack([u, v], axis=1) - problem.pixels.coords[ok]
        err[ok] = np.linalg.norm(delta, axis=1)
    return err


def _procrustes(src, dst):
    """Rigid (R, t) minimizing ||dst - (R src + t)||, det(R) = +1."""
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return r, cd - r @ cs


def _control_points(world):
    """Centroid + principal-axis control points; 3 of them when planar."""
    c0 = world.mean(axis=0)
    centered = world - c0
    cov = centered.T @ centered / len(world)
    evals, evecs = np.linalg.eigh(cov)  # ascending
    scale = max(evals[2], 0.0)
    if scale <= 0 or evals[1] <= _RELATIVE_RANK_TOL * scale:
        raise DegenerateGeometry("world points are collinear or coincident")
    planar = evals[0] <= _RELATIVE_RANK_TOL * scale
    axes = [c0 + math.sqrt(evals[i]) * evecs[:, i] for i in (2, 1, 0)]
    ctrl = np.stack([c0] + axes[:2] if planar else [c0] + axes)
    return ctrl, planar


def _barycentric_control(world, ctrl):
    k = len(ctrl)
    a = np.vstack([ctrl.T, np.ones(k)])
    b = np.vstack([world.T, np.ones(len(world))])
    if k == 4:
        return np.linalg.solve(a, b).T
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    return sol.T


def _null_basis(alphas, pixels, intr, nb):
    m, k = alphas.shape
    mat = np.zeros((2 * m, 3 * k))
    u = pixels[:, 0]
    v = pixels[:, 1]
    for j in range(k):
        a = alphas[:, j]
        mat[0::2, 3 * j] = a * intr.fx
        mat[0::2, 3 * j + 2] = a * (intr.cx - u)
        mat[1::2, 3 * j + 1] = a * intr.fy
        mat[1::2, 3 * j + 2] = a * (intr.cy - v)
    _, vecs = np.linalg.eigh(mat.T @ mat)
    return vecs[:, :nb]


def _beta_setup(basis, ctrl):
    k = len(ctrl)
    nb = basis.shape[1]
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    dist2 = np.array([np.sum((ctrl[a] - ctrl[b]) ** 2) for a, b in pairs])
    per_vec = basis.T.reshape(nb, k, 3)
    diffs = np.stack([per_vec[:, a, :] - per_vec[:, b, :] for a, b in pairs])
    return dist2, diffs  # (P,), (P, nb, 3)


def _rescale_betas(betas, dist2, diffs):
    cur = np.einsum("pqi,q->pi", diffs, betas)
    total = np.sum(cur * cur)
    if total <= 0:
        return betas
    return betas * math.sqrt(np.sum(dist2) / total)


def _beta_inits(dist2, diffs, nb):
    inits = []
    for q in range(nb):  # single-vector (N=1) cases
        b = np.zeros(nb)
        b[q] = 1.0
        inits.append(_rescale_betas(b, dist2, diffs))
    if nb >= 2:  # relinearized N=2 on the two strongest vectors
        col = np.stack(
            [
                np.sum(diffs[:, 0, :] ** 2, axis=1),
                2.0 * np.einsum("pi,pi->p", diffs[:, 0, :], diffs[:, 1, :]),
                np.sum(diffs[:, 1, :] ** 2, axis=1),
            ],
            axis=1,
        )
        sol, *_ = np.linalg.lstsq(col, dist2, rcond=None)
        b = np.zeros(nb)
        b[0] = math.sqrt(abs(sol[0]))
        b[1] = math.copysign(math.sqrt(abs(sol[2])), sol[1]) if sol[2] else 0.0
        inits.append(_rescale_betas(b, dist2, diffs))
    if nb >= 3 and len(dist2) >= 6:  # relinearized N=3
        col = np.zeros((len(dist2), 6))
        for p in range(len(dist2)):
            v1, v2, v3 = diffs[p, 0], diffs[p, 1], diffs[p, 2]
            col[p] = [v1 @ v1, 2 * v1 @ v2, 2 * v1 @ v3, v2 @ v2, 2 * v2 @ v3, v3 @ v3]
        sol, *_ = np.linalg.lstsq(col, dist2, rcond=None)
        b = np.zeros(nb)
        b[0] = math.sqrt(abs(sol[0]))
        b[1] = math.copysign(math.sqrt(abs(sol[3])), sol[1]) if sol[3] else 0.0
        b[2] = math.copysign(math.sqrt(abs(sol[5])), sol[2]) if sol[5] else 0.0
        inits.append(_rescale_betas(b, dist2, diffs))
    if nb == 4:
        # dense sign patterns rescue the minimal case, where the null
        # space is 4-dimensional and eigenvalue ordering is arbitrary
        for pattern in (
            (1, 1, 1, 1), (1, -1, 1, -1), (1, 1, -1, -1), (1, -1, -1, 1),
            (1, 1, 1, -1), (1, 1, -1, 1), (1, -1, 1, 1), (-1, 1, 1, 1),
        ):
            inits.append(_rescale_betas(np.array(pattern, dtype=np.float64), dist2, diffs))
    return inits


def _gauss_newton_betas(betas, dist2, diffs):
    for _ in range(_BETA_GN_ITERS):
        cur = np.einsum("pqi,q->pi", diffs, betas)
        residual = np.sum(cur * cur, axis=1) - dist2
        jac = 2.0 * np.einsum("pi,pqi->pq", cur, diffs)
        try:
            step = np.linalg.solve(jac.T @ jac, -jac.T @ residual)
        except np.linalg.LinAlgError:
            break
        betas = betas + step
    return betas


def solve_epnp(problem: PnPProblem) -> RigidPose:
    """Control-point PnP; exact on noise-free data down to m = 4."""
    world = problem.world_points
    pixels = problem.pixels.coords
    ctrl, planar = _control_points(world)
    k = len(ctrl)
    nb = 3 if planar else 4
    alphas = _barycentric_control(world, ctrl)
    basis = _null_basis(alphas, pixels, problem.intr, nb)
    dist2, diffs = _beta_setup(basis, ctrl)

    # candidates ranked by behind-camera count, then reprojection RMSE over
    # the in-front points, so a best-but-behind pose is selectable (and then
    # rejected with BehindCamera) instead of silently discarded
    best_key = (len(world) + 1, np.inf)
    best_pose = None
    for init in _beta_inits(dist2, diffs, nb):
        betas = _gauss_newton_betas(init.copy(), dist2, diffs)
        cam_ctrl = (basis @ betas).reshape(k, 3)
        if cam_ctrl[:, 2].mean() < 0:  # sign disambiguation on control-point depth
            cam_ctrl = -cam_ctrl
        cam_pts = alphas @ cam_ctrl
        r, t = _procrustes(world, cam_pts)
        pose = RigidPose(r, t)
        err = reprojection_errors(pose, problem)
        front = np.isfinite(err)
        behind = int(len(err) - front.sum())
        rmse = math.sqrt(np.mean(err[front] ** 2)) if front.any() else np.inf
        key = (behind, rmse)
        if key < best_key:
            best_key = key
            best_pose = pose
            if key[0] == 0 and key[1] < 1e-9:
                break
    if best_pose is None:
        raise DegenerateGeometry("no admissible control-point solution")
    if best_key[0] * 2 >= len(world):
        raise BehindCamera(f"{best_key[0]}/{len(world)} points at Z <= 0")
    return best_pose


def refine_pose(pose: RigidPose, problem: PnPProblem, iters: int = 10) -> RefineResult:
    """Gauss-Newton on (axis-angle, translation) minimizing reprojection error.

    The step is halved up to 8 times to enforce a monotone non-increasing
    RMSE; the rotation is re-orthonormalized every iterate.  On singular
    normal equations the input pose is returned with the flag set.
    """
    if iters < 1:
        raise InvariantViolation("iters must be >= 1")
    world = problem.world_points
    target = problem.pixels.coords
    intr = problem.intr

    def rmse(p):
        e = reprojection_errors(p, problem)
        return math.sqrt(np.mean(e**2)) if np.all(np.isfinite(e)) else np.inf

    current = pose
    history = [rmse(current)]
    singular = False
    for _ in range(iters):
        cam = world @ current.rotation.T + current.translation
        z = cam[:, 2]
        if np.any(z <= 1e-9):
            break
        u = intr.fx * cam[:, 0] / z + intr.cx
        v = intr.fy * cam[:, 1] / z + intr.cy
        res = np.stack([u, v], axis=1) - target  # (m, 2)

        # d(pixel)/d(cam point)
        du = np.stack([intr.fx / z, np.zeros_like(z), -intr.fx * cam[:, 0] / z**2], axis=1)
        dv = np.stack([np.zeros_like(z), intr.fy / z, -intr.fy * cam[:, 1] / z**2], axis=1)
        # left increment on the whole transform: cam' = exp(w^) cam + dt,
        # so d(cam)/d(w) = -[cam]_x and the update rotates t as well
        skew = np.zeros((len(cam), 3, 3))
        skew[:, 0, 1] = -cam[:, 2]
        skew[:, 0, 2] = cam[:, 1]
        skew[:, 1, 0] = cam[:, 2]
        skew[:, 1, 2] = -cam[:, 0]
        skew[:, 2, 0] = -cam[:, 1]
        skew[:, 2, 1] = cam[:, 0]
        jac = np.empty((len(cam), 2, 6))
        jac[:, 0, :3] = -np.einsum("mi,mij->mj", du, skew)
        jac[:, 1, :3] = -np.einsum("mi,mij->mj", dv, skew)
        jac[:, 0, 3:] = du
        jac[:, 1, 3:] = dv

        j = jac.reshape(-1, 6)
        r = res.reshape(-1)
        jtj = j.T @ j
        try:
            step = np.linalg.solve(jtj, -j.T @ r)
        except np.linalg.LinAlgError:
            singular = True
            break
        if not np.all(np.isfinite(step)):
            singular = True
            break

        accepted = None
        for _halving in range(9):
            omega = step[:3]
            angle = np.linalg.norm(omega)
            if angle > 0:
                axis = omega / angle
                kx = np.array(
                    [
                        [0.0, -axis[2], axis[1]],
                        [axis[2], 0.0, -axis[0]],
                        [-axis[1], axis[0], 0.0],
                    ]
                )
                dr = (
                    np.eye(3)
                    + math.sin(angle) * kx
                    + (1.0 - math.cos(angle)) * (kx @ kx)
                )
            else:
                dr = np.eye(3)
            r_new = dr @ current.rotation
            # re-orthonormalize against accumulated round-off
            uu, _, vvt = np.linalg.svd(r_new)
            r_new = uu @ np.diag([1.0, 1.0, np.sign(np.linalg.det(uu @ vvt))]) @ vvt
            candidate = RigidPose(r_new, dr @ current.translation + step[3:])
            value = rmse(candidate)
            if value <= history[-1]:
                accepted = (candidate, value)
                break
            step = step / 2.0
        if accepted is None:
            break
        current, value = accepted
        history.append(value)
        if len(history) >= 2 and history[-2] - history[-1] < 1e-15:
            break
    if singular and len(history) == 1:
        return RefineResult(pose, True, tuple(history))
    return RefineResult(current, singular, tuple(history))


def solve_pnp_ransac(problem: PnPProblem, cfg: RansacConfig = RansacConfig()):
    """Seeded minimal-sample consensus around solve_epnp.

    Best hypothesis by inlier count, ties broken by lower mean inlier
    error then lower iteration index; the final pose re-solves on all
    inliers, runs Gauss-Newton refinement (by default), and repeats once
    on a residual-purified inlier set.  Returns (pose, inlier_indices).
    """
    m = len(problem)
    rng = np.random.default_rng(cfg.seed)
    best_count = 0
    best_mean = np.inf
    best_inliers = None
    needed = cfg.max_iterations

    for iteration in range(cfg.max_iterations):
        if iteration >= needed:
            break
        sample = rng.choice(m, size=cfg.min_sample, replace=False)
        try:
            hypothesis = solve_epnp(
                PnPProblem(
                    PixelSet(problem.pixels.coords[sample]),
                    problem.world_points[sample],
                    problem.intr,
                )
            )
        except (DegenerateGeometry, BehindCamera):
            continue
        err = reprojection_errors(hypothesis, problem)
        inliers = err < cfg.inlier_threshold_px
        count = int(np.count_nonzero(inliers))
        if count < cfg.min_sample:
            continue
        mean_err = float(np.mean(err[inliers]))
        if count > best_count or (count == best_count and mean_err < best_mean):
            best_count = count
            best_mean = mean_err
            best_inliers = inliers
            ratio = count / m
            if ratio >= 1.0:
                needed = iteration + 1
            else:
                denom = math.log(1.0 - ratio**4)
                if denom < 0:
                    needed = min(
                        cfg.max_iterations,
                        math.ceil(math.log(1.0 - cfg.confidence) / denom),
                    )

    if best_inliers is None:
        raise NoConsensus(f"no hypothesis reached {cfg.min_sample} inliers")

    def fit(mask):
        subset = PnPProblem(
            PixelSet(problem.pixels.coords[mask]),
            problem.world_points[mask],
            problem.intr,
        )
        fitted = solve_epnp(subset)
        if cfg.refine_iterations > 0:
            fitted = refine_pose(fitted, subset, cfg.refine_iterations).pose
        return fitted

    pose = fit(best_inliers)
    # purification pass: an outlier can sit inside the threshold by chance
    # and bias the least-squares refit; re-select at a residual-adaptive
    # threshold (never looser than the configured one) and refit once
    residuals = reprojection_errors(pose, problem)[best_inliers]
    adaptive = min(
        cfg.inlier_threshold_px, max(10.0 * float(np.median(residuals)), 1e-6)
    )
    purified_err = reprojection_errors(pose, problem)
    purified = purified_err < adaptive
    if purified.sum() >= cfg.min_sample and not np.array_equal(
        purified, best_inliers
    ):
        pose = fit(purified)
    final_err = reprojection_errors(pose, problem)
    return pose, np.nonzero(final_err < cfg.inlier_threshold_px)[0]


def solve_dlt(problem: PnPProblem) -> RigidPose:
    """Direct linear transform oracle; needs m >= 6 non-planar points."""
    world = problem.world_points
    pixels = problem.pixels.coords
    if len(world) < 6:
        raise InvariantViolation("DLT needs at least 6 points")
    centered = world - world.mean(axis=0)
    evals = np.linalg.eigvalsh(centered.T @ centered / len(world))
    if evals[0] <= _RELATIVE_RANK_TOL * max(evals[2], 1e-300):
        raise DegenerateGeometry("DLT requires non-planar points")

    a = np.zeros((2 * len(world), 12))
    xh = np.hstack([world, np.ones((len(world), 1))])
    a[0::2, 0:4] = xh
    a[0::2, 8:12] = -pixels[:, 0:1] * xh
    a[1::2, 4:8] = xh
    a[1::2, 8:12] = -pixels[:, 1:2] * xh
    _, _, vt = np.linalg.svd(a)
    p = vt[-1].reshape(3, 4)

    g = np.linalg.solve(problem.intr.matrix(), p)
    if np.linalg.det(g[:, :3]) < 0:
        g = -g
    u, s, vt = np.linalg.svd(g[:, :3])
    r = u @ vt
    if np.linalg.det(r) < 0:
        r = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    scale = 3.0 / np.sum(s)
    return RigidPose(r, scale * g[:, 3])
