"""Python front end to the cotlab C++ core."""

import json

from . import _core
from ._core import (
    ConfigError,
    InputError,
    StructuralError,
    apply_gate,
    build_dataset,
    check_parity_invariance,
    default_support,
    density_quality,
    grad_check,
    pmi,
    scaling_slope,
    synergy,
)

__version__ = _core.__version__


def parity_samples(d, support=(), n=1, seed=1):
    """Parity instances with their CoT traces, as dicts."""
    return [json.loads(s) for s in _core.parity_samples(d, list(support), n, seed)]


def default_train_config():
    return json.loads(_core.default_train_config())


def train(**overrides):
    """Train one mode; keyword arguments override the default config."""
    cfg = default_train_config()
    unknown = set(overrides) - set(cfg)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg.update(overrides)
    return json.loads(_core.train_json(json.dumps(cfg)))


def natbool_samples(hops, count, seed=1, themes=("medical", "logistics", "access-control")):
    return [json.loads(s) for s in _core.natbool_samples(hops, count, seed, list(themes))]


def verify_sample(sample):
    """List of (failure kind, detail); empty when the sample checks out."""
    return _core.verify_json(json.dumps(sample))


def shortcut_marginals(samples, min_support=1000):
    return json.loads(_core.shortcut_json([json.dumps(s) for s in samples], min_support))


def natbool_tokens(sample, with_cot=False):
    return _core.natbool_tokens(json.dumps(sample), with_cot)
