"""The three f-divergences driving the flow, with first/second derivatives.

Each divergence is defined by a convex f with f(1) = 0:

    kl    f(r) = r log r               f'(r) = log r + 1       f''(r) = 1/r
    js    f(r) = r log r
               - (r+1) log((r+1)/2)    f'(r) = log(2r/(r+1))   f''(r) = 1/(r^2+r)
    logd  f(r) = (r+1) log(r+1)
               - 2 log 2               f'(r) = log(r+1) + 1    f''(r) = 1/(r+1)

The flow's deterministic velocity at a particle with discriminator logit d is
-grad f'(r(x)) with r = exp(-d); by the chain rule that equals
f''(r) * r * grad d, and the scalar prefactor f''(r) * r reduces to a logistic
expression of the logit for every row above (1, sigmoid(d), sigmoid(-d)).
Working with the logit directly keeps the drift finite for any finite d.
"""

from dataclasses import dataclass

import numpy as np

from dgflow.errors import ConfigurationError


def _sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass(frozen=True)
class FDivergence:
    name: str
    f: callable
    f_prime: callable
    f_double_prime: callable
    drift_coef: callable  # f''(exp(-d)) * exp(-d) as a function of the logit d


def _check_ratio(r):
    r = np.asarray(r, dtype=np.float64)
    if np.any(r <= 0):
        raise ConfigurationError("density ratio must be positive")
    return r


def _kl_f(r):
    r = _check_ratio(r)
    return r * np.log(r)


def _kl_fp(r):
    return np.log(_check_ratio(r)) + 1.0


def _kl_fpp(r):
    return 1.0 / _check_ratio(r)


def _js_f(r):
    r = _check_ratio(r)
    return r * np.log(r) - (r + 1.0) * np.log((r + 1.0) / 2.0)


def _js_fp(r):
    r = _check_ratio(r)
    return np.log(2.0 * r / (r + 1.0))


def _js_fpp(r):
    r = _check_ratio(r)
    return 1.0 / (r * r + r)


def _logd_f(r):
    r = _check_ratio(r)
    return (r + 1.0) * np.log(r + 1.0) - 2.0 * np.log(2.0)


def _logd_fp(r):
    r = _check_ratio(r)
    return np.log(r + 1.0) + 1.0


def _logd_fpp(r):
    r = _check_ratio(r)
    return 1.0 / (r + 1.0)


KL = FDivergence("kl", _kl_f, _kl_fp, _kl_fpp,
                 drift_coef=lambda d: np.ones_like(np.asarray(d, dtype=np.float64)))
JS = FDivergence("js", _js_f, _js_fp, _js_fpp,
                 drift_coef=lambda d: _sigmoid(d))
LOGD = FDivergence("logd", _logd_f, _logd_fp, _logd_fpp,
                   drift_coef=lambda d: _sigmoid(-d))

_BY_NAME = {"kl": KL, "js": JS, "logd": LOGD}


def get_divergence(name):
    try:
        return _BY_NAME[name.lower()]
    except KeyError:
        raise ConfigurationError(
            f"unknown divergence {name!r}; expected one of {sorted(_BY_NAME)}"
        ) from None


def f_prime(div, r):
    """First derivative of the divergence's f at ratio r (r > 0)."""
    return div.f_prime(r)


def drift(div, logits, grad_logits):
    """Deterministic flow velocity -grad f'(exp(-d(x))) from logit and its gradient.

    logits: (n,) or (n, 1); grad_logits: (n, dim) rows of grad d.
    """
    d = np.asarray(logits, dtype=np.float64).reshape(-1)
    coef = div.drift_coef(d)
    return coef[:, None] * np.asarray(grad_logits, dtype=np.float64)
