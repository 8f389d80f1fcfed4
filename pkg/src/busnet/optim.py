"""SGD with momentum and Adam.

Both updates are functional: they return new parameters and a new state
and never modify their inputs. Names in ``Parameters.frozen`` are copied
through unchanged.

SGDM keeps the learning rate inside the velocity::

    v <- momentum * v - lr * g
    theta <- theta + v

(the other common form, ``v <- momentum * v + g; theta <- theta - lr * v``,
differs only when the learning rate changes mid-run, which never happens
here because the rate is constant).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from busnet.neuralnet import Parameters


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    learning_rate: float = 5e-5
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("sgdm", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}; expected 'sgdm' or 'adam'")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("momentum", "beta1", "beta2"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {v}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class OptimizerState:
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def init_state(params: Parameters, cfg: OptimizerConfig) -> OptimizerState:
    first = {k: np.zeros_like(v) for k, v in params.tensors.items()}
    second = {k: np.zeros_like(v) for k, v in params.tensors.items()} if cfg.kind == "adam" else {}
    return OptimizerState(0, first, second)


def _check(params: Parameters, grads: dict[str, np.ndarray], state: OptimizerState, cfg: OptimizerConfig, kind: str):
    if cfg.kind != kind:
        raise ValueError(f"{kind} step called with a {cfg.kind} config")
    for name, t in params.tensors.items():
        if name not in grads:
            raise ValueError(f"missing gradient for {name}")
        if grads[name].shape != t.shape:
            raise ValueError(f"gradient shape {grads[name].shape} != parameter shape {t.shape} for {name}")
        m = state.first_moment.get(name)
        if m is not None and m.shape != t.shape:
            raise ValueError(f"optimizer state shape {m.shape} != parameter shape {t.shape} for {name}")


def sgdm_step(params: Parameters, grads, state: OptimizerState, cfg: OptimizerConfig):
    _check(params, grads, state, cfg, "sgdm")
    new_t, new_v = {}, {}
    for name, theta in params.tensors.items():
        v = state.first_moment.get(name)
        if v is None:
            v = np.zeros_like(theta)
        if name in params.frozen:
            new_t[name], new_v[name] = theta, v
            continue
        v = cfg.momentum * v - cfg.learning_rate * grads[name]
        new_t[name] = theta + v
        new_v[name] = v
    return (
        Parameters(new_t, params.init_seed, params.frozen),
        OptimizerState(state.step_count + 1, new_v, {}),
    )


def adam_step(params: Parameters, grads, state: OptimizerState, cfg: OptimizerConfig):
    _check(params, grads, state, cfg, "adam")
    t = state.step_count + 1
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    new_t, new_m, new_v = {}, {}, {}
    for name, theta in params.tensors.items():
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(theta)
        if v is None:
            v = np.zeros_like(theta)
        if name in params.frozen:
            new_t[name], new_m[name], new_v[name] = theta, m, v
            continue
        g = grads[name]
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_t[name] = theta - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
        new_m[name], new_v[name] = m, v
    return (
        Parameters(new_t, params.init_seed, params.frozen),
        OptimizerState(t, new_m, new_v),
    )


def step(params: Parameters, grads, state: OptimizerState, cfg: OptimizerConfig):
    if cfg.kind == "sgdm":
        return sgdm_step(params, grads, state, cfg)
    return adam_step(params, grads, state, cfg)
