"""Named parameter containers."""

from __future__ import annotations

import numpy as np

from .tensor import Param, Tape


class Module:
    """Holds an ordered dict of :class:`Param`; subclasses define ``forward``."""

    def __init__(self):
        self.params: dict[str, Param] = {}

    def add_param(self, name: str, values) -> Param:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        p = Param(name, values)
        self.params[name] = p
        return p

    def parameters(self) -> list[Param]:
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def bind(self, tape: Tape | None):
        """Parameter lookup: taped tensors when training, raw arrays otherwise."""
        if tape is None:
            return lambda name: self.params[name].values
        cache = {}

        def get(name):
            if name not in cache:
                cache[name] = tape.watch(self.params[name])
            return cache[name]

        return get

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.values.copy() for k, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if missing or extra:
            raise ValueError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for k, v in state.items():
            v = np.asarray(v, dtype=np.float64)
            if v.shape != self.params[k].shape:
                raise ValueError(f"{k}: shape {v.shape} != {self.params[k].shape}")
            self.params[k].values = v.copy()

    def num_params(self) -> int:
        return int(sum(p.values.size for p in self.params.values()))
