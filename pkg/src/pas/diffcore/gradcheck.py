import numpy as np


class GradCheckError(RuntimeError):
    pass


def grad_check(fn, params, step=1e-5, keys=None):
    """Compare reverse-mode gradients of ``fn(params)`` with central differences.

    ``fn`` must return a scalar Tensor and be deterministic in ``params``.
    Returns ``{key: max relative error}`` where the relative error of each
    scalar entry is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if not 1e-7 <= step <= 1e-3:
        raise ValueError(f"step must lie in [1e-7, 1e-3], got {step}")
    keys = list(params) if keys is None else list(keys)
    for p in params.values():
        p.grad = None
    out = fn(params)
    if not np.isfinite(out.data).all():
        raise GradCheckError("function value is not finite at the base point")
    out.backward()
    report = {}
    for key in keys:
        p = params[key]
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = float(fn(params).data)
            flat[i] = orig - step
            fm = float(fn(params).data)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise GradCheckError(f"non-finite function value perturbing {key}[{i}]")
            numeric.reshape(-1)[i] = (fp - fm) / (2 * step)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
        err = np.abs(analytic - numeric) / denom
        report[key] = float(err.max()) if err.size else 0.0
    for p in params.values():
        p.grad = None
    return report
