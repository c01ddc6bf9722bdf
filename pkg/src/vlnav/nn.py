"""Parameter containers and the SGD optimizer."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, parameter


def uniform_init(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Base class: walks attributes to enumerate named parameters."""

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = []
        for name in sorted(vars(self)):
            value = getattr(self, name)
            key = f"{prefix}{name}" if not prefix else f"{prefix}/{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out.append((key, value))
            elif isinstance(value, Module):
                out.extend(value.named_parameters(key))
            elif isinstance(value, (list, tuple)):
                for idx, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(f"{key}.{idx}"))
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out.append((f"{key}.{idx}", item))
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


class Linear(Module):
    def __init__(self, rng: np.random.Generator, in_dim: int, out_dim: int):
        self.W = parameter(uniform_init(rng, (out_dim, in_dim), in_dim))
        self.b = parameter(np.zeros(out_dim))

    def __call__(self, x: Tensor) -> Tensor:
        return self.W @ x + self.b


class LSTMCell(Module):
    """Holds the fused gate weights; stepping lives in autodiff.lstm_step."""

    def __init__(self, rng: np.random.Generator, in_dim: int, hidden_dim: int):
        self.Wx = parameter(uniform_init(rng, (4 * hidden_dim, in_dim), in_dim))
        self.Wh = parameter(uniform_init(rng, (4 * hidden_dim, hidden_dim), hidden_dim))
        self.b = parameter(np.zeros(4 * hidden_dim))
        self.hidden_dim = hidden_dim


class Embedding(Module):
    def __init__(self, rng: np.random.Generator, vocab_size: int, dim: int):
        self.table = parameter(rng.standard_normal((vocab_size, dim)) * 0.1)


class SGD:
    """Stochastic gradient descent with classical momentum."""

    def __init__(self, params: list[Tensor], lr: float, momentum: float = 0.9):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                continue
            v *= self.momentum
            v += p.grad
            p.data -= self.lr * v

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
