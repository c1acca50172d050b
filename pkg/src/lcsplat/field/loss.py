"""Field training objective: occupancy BCE + eikonal + smoothness + color L1."""

import numpy as np

from ..diffmath import Tensor, absval, clamp, log, mul, scale, sigmoid, sqrt, sub, tmean, tsum
from .model import decode_rgb, decode_sdf


def flat_sigmoid(x, sigma):
    """S(x) = 1 / (1 + exp(x / sigma)): monotone decreasing, S(0) = 0.5."""
    return 1.0 / (1.0 + np.exp(np.asarray(x, dtype=np.float64) / sigma))


def bce_from_predictions(pred_occ, target_occ, eps=1e-7):
    """Mean binary cross entropy between tape occupancies and constants."""
    q = clamp(pred_occ, eps, 1.0 - eps)
    t = np.asarray(target_occ, dtype=pred_occ.data.dtype)
    ll = mul(Tensor(t), log(q)) + mul(Tensor(1.0 - t), log(1.0 - q))
    return scale(tmean(ll), -1.0)


def field_loss(batch, grid, decoders, cfg, rng):
    """Weighted total plus per-term floats for logging.

    Spatial SDF gradients come from central differences of the decoded
    field (step grad_step_voxels * leaf voxel), evaluated in the same tape
    so feature/weight gradients flow through every probe.
    """
    pts = batch.points
    P = len(pts)
    h = cfg.grad_step_voxels * grid.leaf_voxel
    n_sub = min(cfg.grad_subset, P)
    sub_rows = rng.choice(P, size=n_sub, replace=False) if n_sub < P else np.arange(P)
    eps_dir = rng.normal(size=(n_sub, 3))
    eps_dir /= np.linalg.norm(eps_dir, axis=1, keepdims=True)
    p_base = pts[sub_rows]
    p_pert = p_base + eps_dir * (cfg.eps_voxels * grid.leaf_voxel)

    shifts = []
    for center in (p_base, p_pert):
        for ax in range(3):
            d = np.zeros(3)
            d[ax] = h
            shifts.append(center + d)
            shifts.append(center - d)
    query = np.concatenate([pts] + shifts, axis=0)
    s_hat = decode_sdf(grid, decoders, query)

    pred_occ = sigmoid(scale(s_hat[:P], -1.0 / cfg.sigma))
    target_occ = flat_sigmoid(batch.sdf_targets, cfg.sigma)
    bce = bce_from_predictions(pred_occ, target_occ)

    def grad_at(block):
        # block 0 = base, 1 = perturbed; slices follow query layout above
        comps = []
        for ax in range(3):
            o = P + (6 * block + 2 * ax) * n_sub
            plus = s_hat[o:o + n_sub]
            minus = s_hat[o + n_sub:o + 2 * n_sub]
            comps.append(scale(sub(plus, minus), 1.0 / (2.0 * h)))
        return comps

    g0 = grad_at(0)
    g1 = grad_at(1)
    norm0 = sqrt(g0[0] * g0[0] + g0[1] * g0[1] + g0[2] * g0[2] + 1e-14)
    one_minus = sub(Tensor(np.ones(n_sub, dtype=np.float32)), norm0)
    eik = tmean(mul(one_minus, one_minus))
    diff2 = None
    for a, b in zip(g0, g1):
        d = sub(a, b)
        diff2 = mul(d, d) if diff2 is None else diff2 + mul(d, d)
    smooth = tmean(diff2)

    if len(batch.color_rows) > 0 and cfg.lambda_rgb > 0:
        c_hat = decode_rgb(grid, decoders, pts[batch.color_rows])
        rgb = tmean(absval(sub(c_hat, Tensor(batch.color_targets.astype(np.float32)))))
    else:
        rgb = Tensor(np.zeros(()), requires_grad=False)

    total = bce + scale(eik, cfg.lambda_eik) + scale(smooth, cfg.lambda_smooth) \
        + scale(rgb, cfg.lambda_rgb)
    parts = {"bce": float(bce.data), "eik": float(eik.data),
             "smooth": float(smooth.data), "rgb": float(rgb.data),
             "total": float(total.data)}
    return total, parts
