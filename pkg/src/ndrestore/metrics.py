"""Image quality metrics and affinity-structure diagnostics.

PSNR is computed on [0,1] floats with peak 1.0; identical images are
capped at 100 dB. SSIM uses the standard 11x11 Gaussian window with
sigma 1.5, K1=0.01, K2=0.03, averaged over the valid region and over
channels.
"""

from __future__ import annotations

import numpy as np

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

SEPARATION_EPS = 1e-9
SEPARATION_CAP = 1e9


def psnr(a, b):
    """Peak signal-to-noise ratio in dB between two same-shape images."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    err = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if err == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / err), PSNR_CAP_DB)


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img, win):
    """Separable 2-D correlation, valid mode, per 2-D channel slice."""
    k = win.size
    v = np.lib.stride_tricks.sliding_window_view(img, k, axis=0) @ win
    return np.lib.stride_tricks.sliding_window_view(v, k, axis=1) @ win


def ssim(a, b):
    """Mean local structural similarity between two images in [0,1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    h, w = a.shape[:2]
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ValueError(f"image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    win = _gaussian_window()
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    vals = []
    for ch in range(a.shape[2]):
        x, y = a[:, :, ch], b[:, :, ch]
        mu_x = _filter_valid(x, win)
        mu_y = _filter_valid(y, win)
        xx = _filter_valid(x * x, win) - mu_x * mu_x
        yy = _filter_valid(y * y, win) - mu_y * mu_y
        xy = _filter_valid(x * y, win) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


# --- affinity-structure diagnostics ---

def affinity_profile(s_matrix):
    """Mean affinity row of one image: (HW, N) -> (N,)."""
    prof = np.asarray(s_matrix, dtype=np.float64).mean(axis=0)
    total = prof.sum()
    if not np.isfinite(total) or abs(total - 1.0) > 1e-4:
        raise ValueError(f"affinity rows are not normalized (profile sum {total})")
    return prof


def separation_summary(profiles, labels):
    """Intra/inter-class distance summary of per-image affinity profiles.

    Returns mean pairwise L2 distance within classes (d_intra), across
    classes (d_inter), and their ratio rho. Degenerate cases: when both
    distances vanish rho is 1 (no measurable structure); when only
    d_intra vanishes rho is reported as the cap marker.
    """
    profiles = np.asarray(profiles, dtype=np.float64)
    labels = list(labels)
    if len(set(labels)) < 2:
        raise ValueError("separation requires at least two degradation kinds")
    intra, inter = [], []
    n = len(labels)
    for i in range(n):
        for j in range(i + 1, n):
            d = float(np.linalg.norm(profiles[i] - profiles[j]))
            (intra if labels[i] == labels[j] else inter).append(d)
    if not intra:
        raise ValueError("separation requires at least two images per kind")
    d_intra = float(np.mean(intra))
    d_inter = float(np.mean(inter))
    if d_inter < SEPARATION_EPS and d_intra < SEPARATION_EPS:
        rho, capped = 1.0, False
    elif d_intra < SEPARATION_EPS:
        rho, capped = SEPARATION_CAP, True
    else:
        rho, capped = d_inter / d_intra, False
    return {"d_intra": d_intra, "d_inter": d_inter, "rho": rho, "capped": capped}


def affinity_separation(affinity_fn, samples):
    """Profile + separation report over (image, kind) samples.

    ``affinity_fn`` maps an (H, W, 3) image to its finest-scale affinity
    matrix (HW, N).
    """
    profiles, labels = [], []
    for img, kind in samples:
        profiles.append(affinity_profile(affinity_fn(img)))
        labels.append(kind)
    summary = separation_summary(profiles, labels)
    summary["profiles"] = [p.tolist() for p in profiles]
    summary["labels"] = labels
    return summary


# --- dataset scoring ---

def score_pairs(pairs, restore_fn=None):
    """Per-sample and per-kind PSNR/SSIM report.

    ``pairs`` is an iterable of (degraded, clean, kind). When
    ``restore_fn`` is None the degraded image itself is scored, which
    gives the degraded-baseline numbers.
    """
    rows = []
    for i, (x, y, kind) in enumerate(pairs):
        out = restore_fn(x) if restore_fn is not None else x
        rows.append({"id": i, "kind": kind, "psnr": psnr(out, y), "ssim": ssim(out, y)})
    by_kind = {}
    for row in rows:
        by_kind.setdefault(row["kind"], []).append(row)
    summary = {}
    for kind, krows in sorted(by_kind.items()):
        summary[kind] = {
            "n": len(krows),
            "psnr": float(np.mean([r["psnr"] for r in krows])),
            "ssim": float(np.mean([r["ssim"] for r in krows])),
        }
    summary["all"] = {
        "n": len(rows),
        "psnr": float(np.mean([r["psnr"] for r in rows])) if rows else 0.0,
        "ssim": float(np.mean([r["ssim"] for r in rows])) if rows else 0.0,
    }
    return {"rows": rows, "summary": summary}
