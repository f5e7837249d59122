"""The assembled model: encoder, cross-view decoder, and pretraining heads.

Every forward pass is a deterministic function of (weights, input, config).
Parameter initialization is driven by a named numpy stream, so models are
reproducible independently of torch's global RNG.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .. import rng as rng_mod
from .blocks import ConvBlock, CrossViewAttention, Mlp, PatchMerging, SwinBlock, UpBlock
from .config import ModelConfig


@dataclass
class FeaturePyramid:
    """Per-stage feature maps, channels-first; ``levels[-1]`` is the bottleneck."""

    levels: tuple[torch.Tensor, ...]

    @property
    def bottleneck(self) -> torch.Tensor:
        return self.levels[-1]

    def shapes(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(t.shape) for t in self.levels)


def _to_tokens(x: torch.Tensor) -> torch.Tensor:
    b, c = x.shape[0], x.shape[1]
    return x.flatten(2).transpose(1, 2).contiguous()  # (B, T, C)


def _from_tokens(t: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    return t.transpose(1, 2).reshape(like.shape).contiguous()


class Encoder(nn.Module):
    """Patch embedding followed by windowed-attention stages with 2x merging."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.patch_embed = nn.Conv3d(
            cfg.in_channels, cfg.embed_dim,
            kernel_size=cfg.patch_embed, stride=cfg.patch_embed,
        )
        self.stages = nn.ModuleList()
        self.merges = nn.ModuleList()
        for s in range(cfg.stages):
            blocks = nn.Sequential(*[
                SwinBlock(cfg.stage_width(s), cfg.heads[s], cfg.stage_window(s), cfg.mlp_ratio)
                for _ in range(cfg.depths[s])
            ])
            self.stages.append(blocks)
            if s < cfg.stages - 1:
                self.merges.append(PatchMerging(cfg.stage_width(s)))

    def forward(self, x: torch.Tensor) -> FeaturePyramid:
        expected = (self.cfg.in_channels, *self.cfg.input_shape)
        if tuple(x.shape[1:]) != expected:
            raise ValueError(
                f"encoder expected input of shape (B, {expected}), got {tuple(x.shape)}"
            )
        if not torch.isfinite(x).all():
            raise ValueError("encoder input contains NaN/Inf")
        t = self.patch_embed(x).permute(0, 2, 3, 4, 1)  # channels-last
        levels = []
        for s, blocks in enumerate(self.stages):
            t = blocks(t)
            levels.append(t.permute(0, 4, 1, 2, 3).contiguous())
            if s < len(self.merges):
                t = self.merges[s](t)
        return FeaturePyramid(levels=tuple(levels))


class Decoder(nn.Module):
    """U-shaped decoder: skip Conv-Blocks, Up-Blocks, optional cross-view attention."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        s_count = cfg.stages
        widths = [cfg.stage_width(s) for s in range(s_count)]
        self.skips = nn.ModuleList([ConvBlock(widths[s], widths[s]) for s in range(s_count - 1)])
        self.ups = nn.ModuleList([UpBlock(widths[s + 1], widths[s]) for s in range(s_count - 1)])
        self.fuse = nn.ModuleList([ConvBlock(2 * widths[s], widths[s]) for s in range(s_count - 1)])
        head_width = max(cfg.embed_dim // 2, cfg.num_classes)
        self.final_up = UpBlock(widths[0], head_width, factor=cfg.patch_embed)
        self.final_conv = ConvBlock(head_width, head_width)
        self.out = nn.Conv3d(head_width, cfg.num_classes, kernel_size=1)
        if cfg.cross_attn_placement != "none":
            self.cross = CrossViewAttention(cfg.cross_attn_width)
        else:
            self.cross = None

    def _step(self, s: int, d: torch.Tensor, skip_feat: torch.Tensor) -> torch.Tensor:
        d = self.ups[s](d)
        skip = self.skips[s](skip_feat)
        return self.fuse[s](torch.cat([d, skip], dim=1))

    def _head(self, d: torch.Tensor) -> torch.Tensor:
        return self.out(self.final_conv(self.final_up(d)))

    def _exchange(self, d_i: torch.Tensor, d_j: torch.Tensor):
        t_i, t_j = _to_tokens(d_i), _to_tokens(d_j)
        g_i, g_j = self.cross(t_i, t_j)
        return _from_tokens(g_i, d_i), _from_tokens(g_j, d_j)

    def forward_single(self, p: FeaturePyramid) -> torch.Tensor:
        d = p.bottleneck
        for s in reversed(range(self.cfg.stages - 1)):
            d = self._step(s, d, p.levels[s])
        return self._head(d)

    def forward_pair(self, p_i: FeaturePyramid, p_j: FeaturePyramid):
        if p_i.shapes() != p_j.shapes():
            raise ValueError(
                f"pyramids disagree: {p_i.shapes()} vs {p_j.shapes()}"
            )
        placement = self.cfg.cross_attn_placement
        d_i, d_j = p_i.bottleneck, p_j.bottleneck
        if placement == "bottleneck":
            d_i, d_j = self._exchange(d_i, d_j)
        for s in reversed(range(self.cfg.stages - 1)):
            d_i = self._step(s, d_i, p_i.levels[s])
            d_j = self._step(s, d_j, p_j.levels[s])
            if placement == "intermediate" and s == self.cfg.stages - 2:
                d_i, d_j = self._exchange(d_i, d_j)
        return self._head(d_i), self._head(d_j)


class ReconHead(nn.Module):
    """Transposed-conv stack mirroring the encoder, bottleneck back to input size."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        mods: list[nn.Module] = []
        for s in reversed(range(1, cfg.stages)):
            mods += [nn.ConvTranspose3d(cfg.stage_width(s), cfg.stage_width(s - 1),
                                        kernel_size=2, stride=2), nn.GELU()]
        head_width = max(cfg.embed_dim // 2, 1)
        mods += [nn.ConvTranspose3d(cfg.embed_dim, head_width,
                                    kernel_size=cfg.patch_embed, stride=cfg.patch_embed),
                 nn.GELU(),
                 nn.Conv3d(head_width, cfg.in_channels, kernel_size=1)]
        self.stack = nn.Sequential(*mods)

    def forward(self, bottleneck: torch.Tensor) -> torch.Tensor:
        return self.stack(bottleneck)


class MultiViewModel(nn.Module):
    """Encoder + cross-view decoder + reconstruction/rotation/contrastive heads."""

    ROTATION_CLASSES = 4
    CONTRASTIVE_DIM = 64

    def __init__(self, cfg: ModelConfig, init_seed: int = 0):
        super().__init__()
        self.config = cfg
        self.encoder = Encoder(cfg)
        self.decoder = Decoder(cfg)
        self.rec_head = ReconHead(cfg)
        self.rot_head = nn.Linear(cfg.bottleneck_width, self.ROTATION_CLASSES)
        con_hidden = cfg.embed_dim * 8
        self.con_head = nn.Sequential(
            nn.Linear(cfg.bottleneck_width, con_hidden),
            nn.GELU(),
            nn.Linear(con_hidden, self.CONTRASTIVE_DIM),
        )
        self.reset_parameters(init_seed)

    # -- forward ops --------------------------------------------------------

    def encode(self, x: torch.Tensor) -> FeaturePyramid:
        return self.encoder(x)

    def decode_single(self, p: FeaturePyramid) -> torch.Tensor:
        return self.decoder.forward_single(p)

    def decode_pair(self, p_i: FeaturePyramid, p_j: FeaturePyramid):
        return self.decoder.forward_pair(p_i, p_j)

    def heads(self, p: FeaturePyramid):
        pooled = p.bottleneck.mean(dim=(2, 3, 4))
        y_rec = self.rec_head(p.bottleneck)
        y_rot = self.rot_head(pooled)
        y_con = self.con_head(pooled)
        return y_rec, y_rot, y_con

    # -- parameters ---------------------------------------------------------

    def reset_parameters(self, seed: int) -> None:
        """Deterministic init: truncated normal (sigma 0.02) for projection
        weights, zeros for biases and attention bias tables, ones for norm gains."""
        stream = rng_mod.stream(seed, "init")
        with torch.no_grad():
            for name, p in sorted(self.named_parameters(), key=lambda kv: kv[0]):
                if name.endswith("attn_bias") or name.endswith(".bias"):
                    p.zero_()
                elif p.dim() >= 2:
                    vals = _trunc_normal(tuple(p.shape), 0.02, stream)
                    p.copy_(torch.from_numpy(vals).to(p.dtype))
                else:
                    p.fill_(1.0)

    def param_count(self) -> int:
        return sum(int(p.numel()) for p in self.parameters())

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.detach().cpu().numpy().copy() for k, v in self.state_dict().items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        state = {k: torch.from_numpy(np.asarray(v)) for k, v in arrays.items()}
        dtype = next(self.parameters()).dtype
        self.load_state_dict({k: v.to(dtype) for k, v in state.items()})


def _trunc_normal(shape: tuple[int, ...], std: float, stream: np.random.Generator) -> np.ndarray:
    out = stream.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = stream.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out


def cross_view_attention(f_i: torch.Tensor, f_j: torch.Tensor, module: CrossViewAttention):
    """Functional form of the pairwise view exchange on token tensors."""
    return module(f_i, f_j)
