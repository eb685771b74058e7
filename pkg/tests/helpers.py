"""Instance builders shared by the test modules."""

import numpy as np

from supportcert.certificate import ProblemInstance, is_identifiable, min_norm_certificate
from supportcert.errors import NotInjectiveError
from supportcert.experiments import CounterRNG, gaussian_design, rademacher_signal
from supportcert.stability import injectivity_check, multipliers

ACCEPTANCE_LINES = []


def report(criterion, passed, detail):
    line = f"CRITERION {criterion}: {'PASS' if passed else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def gaussian_instance(seed, m, n, k, stream=11):
    rng = CounterRNG(seed, stream)
    Phi = gaussian_design(m, n, rng)
    x0 = rademacher_signal(n, k, rng)
    return ProblemInstance(Phi, x0)


def usable_instance(seed, m, n, k, alphas=(np.inf,), tries=200, stream=11):
    """First identifiable, injective instance from ``seed`` onward.

    Returns ``(seed_used, instance, {alpha: (certificate, v)})``.
    """
    for s in range(seed, seed + tries):
        inst = gaussian_instance(s, m, n, k, stream)
        if not is_identifiable(inst)[0]:
            continue
        out = {}
        for alpha in alphas:
            cert = min_norm_certificate(inst, alpha)
            ok, R = injectivity_check(cert, inst.Phi)
            if not ok:
                break
            out[alpha] = (cert, multipliers(cert, inst.Phi, R))
        else:
            return s, inst, out
    raise NotInjectiveError(f"no usable instance in {tries} seeds")


def soft_threshold(y, t):
    return np.sign(y) * np.maximum(np.abs(y) - t, 0.0)
