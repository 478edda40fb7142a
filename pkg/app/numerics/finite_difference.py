"""
Central finite differences for auditing reverse-mode gradients
"""
import torch


def central_difference(fn, x, eps=1e-6):
    """Gradient of scalar ``fn`` at ``x`` by central differences.

    ``x`` is perturbed in place one coordinate at a time and restored.
    """
    x = x.detach()
    grad = torch.zeros_like(x)
    flat, out = x.view(-1), grad.view(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            saved = flat[i].item()
            flat[i] = saved + eps
            up = float(fn(x))
            flat[i] = saved - eps
            down = float(fn(x))
            flat[i] = saved
            out[i] = (up - down) / (2 * eps)
    return grad


def relative_error(analytic, numeric, floor=1e-3):
    """max |a - n| / max(|a|, |n|, floor) over all coordinates.

    The floor keeps round-off on near-zero coordinates from dominating.
    """
    scale = torch.maximum(analytic.abs(), numeric.abs()).clamp_min(floor)
    return float(((analytic - numeric).abs() / scale).max())
