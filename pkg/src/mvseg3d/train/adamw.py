"""AdamW with decoupled weight decay and per-parameter rate scaling.

Hand-rolled (rather than torch.optim) so moments serialize exactly for
bit-reproducible resume, and so layer-wise rate scales attach per parameter.
Decay order matches the decoupled formulation: with a zero gradient and fresh
moments, a step is exactly ``w <- w * (1 - lr * wd)``.
"""

from __future__ import annotations

import numpy as np
import torch


def decays(name: str, param: torch.Tensor) -> bool:
    """Weight decay applies to projection weights only, never to biases,
    norm gains, or attention bias tables."""
    return name.endswith(".weight") and param.dim() >= 2


class AdamW:
    def __init__(self, named_params: dict[str, torch.nn.Parameter],
                 weight_decay: float = 0.1, betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, lr_scales: dict[str, float] | None = None):
        self.params = dict(named_params)
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.lr_scales = dict(lr_scales or {})
        self.t = 0
        self.m = {k: torch.zeros_like(p) for k, p in self.params.items()}
        self.v = {k: torch.zeros_like(p) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def clip_gradients(self, max_norm: float) -> float:
        """Scale all gradients so their global L2 norm is at most ``max_norm``."""
        grads = [p.grad for p in self.params.values() if p.grad is not None]
        if not grads:
            return 0.0
        total = torch.sqrt(sum((g.detach() ** 2).sum() for g in grads))
        if max_norm > 0 and total > max_norm:
            scale = max_norm / total
            with torch.no_grad():
                for g in grads:
                    g.mul_(scale)
        return float(total)

    def step(self, lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        with torch.no_grad():
            for name, p in self.params.items():
                lr_p = lr * self.lr_scales.get(name, 1.0)
                if self.weight_decay and decays(name, p):
                    p.mul_(1.0 - lr_p * self.weight_decay)
                grad = p.grad if p.grad is not None else torch.zeros_like(p)
                m = self.m[name]
                v = self.v[name]
                m.mul_(self.beta1).add_(grad, alpha=1.0 - self.beta1)
                v.mul_(self.beta2).addcmul_(grad, grad, value=1.0 - self.beta2)
                m_hat = m / bc1
                v_hat = v / bc2
                p.addcdiv_(m_hat, v_hat.sqrt().add_(self.eps), value=-lr_p)

    # -- serialization --------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in self.params:
            out[f"m.{name}"] = self.m[name].detach().cpu().numpy().copy()
            out[f"v.{name}"] = self.v[name].detach().cpu().numpy().copy()
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], t: int) -> None:
        self.t = int(t)
        for name, p in self.params.items():
            self.m[name] = torch.from_numpy(np.asarray(arrays[f"m.{name}"])).to(p.dtype)
            self.v[name] = torch.from_numpy(np.asarray(arrays[f"v.{name}"])).to(p.dtype)
