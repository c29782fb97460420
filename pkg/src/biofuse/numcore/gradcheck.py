"""Central-difference gradient checking for anything built on Parameter.

The analytic gradient comes from one call of the supplied closure; the
numerical one from two more evaluations per sampled coordinate. Coordinates
sitting on a kink (ReLU crossing, max-pool tie) make central differences
meaningless, so a curvature probe skips them instead of reporting noise.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ParameterError


@dataclass
class GradCheckReport:
    """Outcome of one gradient check."""

    max_rel_error: float = 0.0
    checked: int = 0
    skipped: int = 0
    worst: str = ""
    failures: list = field(default_factory=list)

    def ok(self, tolerance):
        return self.checked > 0 and self.max_rel_error < tolerance

    def __str__(self):
        return (
            f"max_rel_error={self.max_rel_error:.3e} checked={self.checked} "
            f"skipped={self.skipped} worst={self.worst or '-'}"
        )


def gradient_check(loss_and_grads, params, rng, samples_per_param=4, step=1e-5, kink_tol=0.02):
    """Compare analytic parameter gradients against central differences.

    ``loss_and_grads()`` must run forward and backward deterministically,
    return the scalar loss, and leave dLoss/dParam in each ``param.grad``
    (grads are zeroed here before the call).

    Differences are taken over two windows, ``step`` and ``step/2``, and
    the half-window estimate is the one reported: a rectifier kink in the
    outer ring biases only the wide window, so the narrow one stays exact.
    A coordinate is skipped as non-differentiable when the two windows
    disagree by more than ``kink_tol`` times the slope scale, or when the
    second difference |f(x+h) + f(x-h) - 2 f(x)| / h exceeds it — for the
    smooth layers here that quantity is ~|f''|*h, orders of magnitude
    below the threshold, so false skips are not a concern.

    Relative error uses max(|analytic|, |numeric|, 1e-5) as denominator,
    so exact-zero gradients are not penalized for rounding noise.
    """
    params = list(params)
    if not params:
        raise ParameterError("nothing to check")
    if step <= 0.0:
        raise ParameterError(f"step must be positive, got {step}")

    for p in params:
        p.grad[...] = 0.0
    base = float(loss_and_grads())
    analytic = [p.grad.copy() for p in params]

    report = GradCheckReport()
    for p, ga in zip(params, analytic):
        flat = p.value.reshape(-1)
        gflat = ga.reshape(-1)
        count = min(samples_per_param, flat.size)
        idx = rng.choice(flat.size, size=count, replace=False)
        for i in idx:
            keep = flat[i]
            f_at = {}
            for offset in (step, -step, step / 2, -step / 2):
                flat[i] = keep + offset
                f_at[offset] = float(loss_and_grads())
            flat[i] = keep

            wide = (f_at[step] - f_at[-step]) / (2.0 * step)
            numeric = (f_at[step / 2] - f_at[-step / 2]) / step
            a = gflat[i]
            # thresholds track the slope size; the floor only guards
            # against float noise in f (~1e-16/step) on near-zero gradients
            scale = max(abs(numeric), abs(a), 1e-3)
            curvature = abs(f_at[step] + f_at[-step] - 2.0 * base) / step
            if curvature > kink_tol * scale or abs(wide - numeric) > kink_tol * scale:
                report.skipped += 1
                continue
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-5)
            report.checked += 1
            if rel > report.max_rel_error:
                report.max_rel_error = rel
                report.worst = f"{p.name or 'param'}[{int(i)}]"
            if rel > 1e-3:
                report.failures.append((p.name, int(i), a, numeric, rel))

    # restore a clean analytic gradient so callers can inspect it
    for p, ga in zip(params, analytic):
        p.grad[...] = ga
    return report
