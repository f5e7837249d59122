"""Model hyperparameters and the resolution/width bookkeeping they induce."""

from __future__ import annotations

from dataclasses import dataclass, field

PLACEMENTS = ("bottleneck", "intermediate", "none")


@dataclass(frozen=True)
class ModelConfig:
    """Desk-scale encoder/decoder hyperparameters.

    Stage ``s`` (0-based) runs its attention blocks at resolution
    ``input_size / (patch_embed * 2**s)`` and width ``embed_dim * 2**s``;
    the last stage's output is the bottleneck. Attention windows are clamped
    to the stage grid, and every stage grid must be divisible by its clamped
    window.
    """

    patch_embed: tuple[int, int, int] = (2, 2, 2)
    embed_dim: int = 24
    depths: tuple[int, ...] = (1, 1, 1, 1)
    heads: tuple[int, ...] = (2, 2, 4, 4)
    window: int = 4
    num_classes: int = 2
    input_size: int = 32
    cross_attn_placement: str = "bottleneck"
    mlp_ratio: float = 2.0
    in_channels: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "patch_embed", tuple(int(p) for p in self.patch_embed))
        object.__setattr__(self, "depths", tuple(int(d) for d in self.depths))
        object.__setattr__(self, "heads", tuple(int(h) for h in self.heads))
        if len(self.depths) != len(self.heads):
            raise ValueError("depths and heads must have the same number of stages")
        if len(self.depths) < 2:
            raise ValueError("need at least two stages")
        if any(d < 1 for d in self.depths) or any(h < 1 for h in self.heads):
            raise ValueError("depths and heads must be positive")
        if self.window < 1 or self.embed_dim < 1 or self.num_classes < 2:
            raise ValueError("window, embed_dim must be >= 1 and num_classes >= 2")
        if self.cross_attn_placement not in PLACEMENTS:
            raise ValueError(
                f"cross_attn_placement must be one of {PLACEMENTS}, "
                f"got {self.cross_attn_placement!r}"
            )
        if self.mlp_ratio <= 0:
            raise ValueError("mlp_ratio must be positive")
        stages = len(self.depths)
        for axis, pe in enumerate(self.patch_embed):
            step = pe * 2 ** (stages - 1)
            if pe < 1 or self.input_size % step != 0:
                raise ValueError(
                    f"input_size {self.input_size} must be divisible by "
                    f"patch_embed*2^(stages-1) = {step} on axis {axis}"
                )
        for s in range(stages):
            if self.stage_width(s) % self.heads[s] != 0:
                raise ValueError(
                    f"stage {s} width {self.stage_width(s)} not divisible by "
                    f"heads {self.heads[s]}"
                )
            for g, w in zip(self.stage_grid(s), self.stage_window(s)):
                if g % w != 0:
                    raise ValueError(
                        f"stage {s} grid {self.stage_grid(s)} not divisible by "
                        f"window {self.stage_window(s)}"
                    )

    @property
    def stages(self) -> int:
        return len(self.depths)

    def stage_grid(self, s: int) -> tuple[int, int, int]:
        return tuple(self.input_size // (pe * 2**s) for pe in self.patch_embed)  # type: ignore[return-value]

    def stage_window(self, s: int) -> tuple[int, int, int]:
        return tuple(min(self.window, g) for g in self.stage_grid(s))  # type: ignore[return-value]

    def stage_width(self, s: int) -> int:
        return self.embed_dim * 2**s

    @property
    def bottleneck_grid(self) -> tuple[int, int, int]:
        return self.stage_grid(self.stages - 1)

    @property
    def bottleneck_width(self) -> int:
        return self.stage_width(self.stages - 1)

    @property
    def cross_attn_width(self) -> int:
        """Token width at the configured cross-attention placement."""
        if self.cross_attn_placement == "intermediate":
            return self.stage_width(self.stages - 2)
        return self.bottleneck_width

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (self.input_size,) * 3
