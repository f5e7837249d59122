"""Building blocks: windowed attention stages, conv/up blocks, cross-view attention."""

from __future__ import annotations

import torch
from torch import nn


def window_partition(x: torch.Tensor, window: tuple[int, int, int]) -> torch.Tensor:
    """(B, D, H, W, C) -> (B * n_windows, tokens, C), non-overlapping windows."""
    b, d, h, w, c = x.shape
    wd, wh, ww = window
    x = x.view(b, d // wd, wd, h // wh, wh, w // ww, ww, c)
    x = x.permute(0, 1, 3, 5, 2, 4, 6, 7).contiguous()
    return x.view(-1, wd * wh * ww, c)


def window_merge(win: torch.Tensor, window: tuple[int, int, int],
                 shape: tuple[int, int, int, int]) -> torch.Tensor:
    """Inverse of :func:`window_partition` back to (B, D, H, W, C)."""
    b, d, h, w = shape
    wd, wh, ww = window
    c = win.shape[-1]
    x = win.view(b, d // wd, h // wh, w // ww, wd, wh, ww, c)
    x = x.permute(0, 1, 4, 2, 5, 3, 6, 7).contiguous()
    return x.view(b, d, h, w, c)


def attention_probs(q: torch.Tensor, k: torch.Tensor,
                    bias: torch.Tensor | None = None) -> torch.Tensor:
    """Scaled dot-product attention rows: softmax(q k^T / sqrt(d)) (+ bias)."""
    scale = q.shape[-1] ** -0.5
    logits = (q @ k.transpose(-2, -1)) * scale
    if bias is not None:
        logits = logits + bias
    return torch.softmax(logits, dim=-1)


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))


class WindowAttention(nn.Module):
    """Multi-head attention within non-shifted 3D windows.

    One learned additive bias table is shared by every window instance.
    """

    def __init__(self, dim: int, num_heads: int, window: tuple[int, int, int]):
        super().__init__()
        self.dim = dim
        self.num_heads = num_heads
        self.window = window
        tokens = window[0] * window[1] * window[2]
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)
        self.attn_bias = nn.Parameter(torch.zeros(num_heads, tokens, tokens))

    def _heads(self, win: torch.Tensor):
        bn, t, _ = win.shape
        qkv = self.qkv(win).reshape(bn, t, 3, self.num_heads, self.dim // self.num_heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4).unbind(0)  # (bn, heads, t, hd)
        return q, k, v

    def probs(self, x: torch.Tensor) -> torch.Tensor:
        """Attention rows for every window of a (B, D, H, W, C) feature map."""
        q, k, _ = self._heads(window_partition(x, self.window))
        return attention_probs(q, k, self.attn_bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, d, h, w, c = x.shape
        win = window_partition(x, self.window)
        q, k, v = self._heads(win)
        attn = attention_probs(q, k, self.attn_bias)
        out = (attn @ v).transpose(1, 2).reshape(win.shape)
        out = self.proj(out)
        return window_merge(out, self.window, (b, d, h, w))


class SwinBlock(nn.Module):
    """Pre-norm windowed attention block; residual branches zero out cleanly."""

    def __init__(self, dim: int, num_heads: int, window: tuple[int, int, int], mlp_ratio: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, num_heads, window)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        x = x + self.mlp(self.norm2(x))
        return x


class PatchMerging(nn.Module):
    """2x downsampling: concatenate the 2x2x2 neighborhood, norm, project to 2C."""

    def __init__(self, dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(8 * dim)
        self.reduction = nn.Linear(8 * dim, 2 * dim, bias=False)

    def forward(self, x):
        parts = [
            x[:, i::2, j::2, k::2, :]
            for i in (0, 1)
            for j in (0, 1)
            for k in (0, 1)
        ]
        x = torch.cat(parts, dim=-1)
        return self.reduction(self.norm(x))


class ConvBlock(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.conv = nn.Conv3d(cin, cout, kernel_size=3, padding=1)
        self.norm = nn.InstanceNorm3d(cout, affine=True)
        self.act = nn.GELU()

    def forward(self, x):
        return self.act(self.norm(self.conv(x)))


class UpBlock(nn.Module):
    def __init__(self, cin: int, cout: int, factor: int | tuple[int, int, int] = 2):
        super().__init__()
        self.up = nn.ConvTranspose3d(cin, cout, kernel_size=factor, stride=factor)
        self.norm = nn.InstanceNorm3d(cout, affine=True)
        self.act = nn.GELU()

    def forward(self, x):
        return self.act(self.norm(self.up(x)))


class CrossViewAttention(nn.Module):
    """Two views exchange information: each view's queries attend to the other.

    ``g_i = f_i + W_O softmax(Q_i K_j^T / sqrt(d)) V_j`` and symmetrically for
    ``g_j``. Single-head; projections are bias-free matrices.
    """

    def __init__(self, dim: int):
        super().__init__()
        self.wq = nn.Linear(dim, dim, bias=False)
        self.wk = nn.Linear(dim, dim, bias=False)
        self.wv = nn.Linear(dim, dim, bias=False)
        self.wo = nn.Linear(dim, dim, bias=False)

    def probs(self, f_q: torch.Tensor, f_kv: torch.Tensor) -> torch.Tensor:
        """Attention rows of f_q's queries over f_kv's keys, (B, T, T)."""
        return attention_probs(self.wq(f_q), self.wk(f_kv))

    def attend(self, f_q: torch.Tensor, f_kv: torch.Tensor) -> torch.Tensor:
        return self.wo(self.probs(f_q, f_kv) @ self.wv(f_kv))

    def forward(self, f_i: torch.Tensor, f_j: torch.Tensor):
        if f_i.shape != f_j.shape:
            raise ValueError(f"cross-view shapes differ: {tuple(f_i.shape)} vs {tuple(f_j.shape)}")
        return f_i + self.attend(f_i, f_j), f_j + self.attend(f_j, f_i)
