"""Training configuration."""

from dataclasses import asdict, dataclass, fields

from .features import CONTEXT_LOCATION_KINDS, CONTEXT_MODES

FILTER_MODES = ("none", "soft", "hard")
DTYPES = ("float32", "float64")


@dataclass(frozen=True)
class TrainConfig:
    """All knobs for one training run.

    The loss coefficients alpha/beta/gamma/lambda_ scale the adaptive
    visual, adaptive language, direct language, and attribute terms.
    ``distance_penalty`` only takes effect in the max context pooling
    modes. ``filter_threshold`` applies to max-normalized subject scores
    when ``filter_mode`` is 'hard'.
    """

    learning_rate: float = 4e-4
    lr_decay_factor: float = 10.0
    lr_decay_every: int = 8000
    max_iterations: int = 30000
    alpha: float = 0.01
    beta: float = 1.0
    gamma: float = 1.0
    lambda_: float = 1.0
    filter_mode: str = "hard"
    filter_threshold: float = 0.6
    context_mode: str = "scxtp"
    context_location: str = "relative"
    distance_penalty: bool = False
    use_location: bool = True
    use_context: bool = True
    use_entity_supervision: bool = True
    embed_dim: int = 64
    hidden_dim: int = 64
    match_hidden: int = 128
    entity_hidden: int = 128
    attend_hidden_states: bool = False
    max_len: int = 16
    seed: int = 0
    dtype: str = "float32"
    word_vectors: str | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.lr_decay_factor <= 1:
            raise ValueError("lr_decay_factor must exceed 1")
        if self.lr_decay_every < 1 or self.max_iterations < 1:
            raise ValueError("lr_decay_every and max_iterations must be at least 1")
        for name in ("alpha", "beta", "gamma", "lambda_"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.filter_mode not in FILTER_MODES:
            raise ValueError(f"filter_mode must be one of {FILTER_MODES}")
        if not (0.0 <= self.filter_threshold <= 1.0):
            raise ValueError("filter_threshold must lie in [0, 1]")
        if self.context_mode not in CONTEXT_MODES:
            raise ValueError(f"context_mode must be one of {CONTEXT_MODES}")
        if self.context_location not in CONTEXT_LOCATION_KINDS:
            raise ValueError(f"context_location must be one of {CONTEXT_LOCATION_KINDS}")
        for name in ("embed_dim", "hidden_dim", "match_hidden", "entity_hidden", "max_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.dtype not in DTYPES:
            raise ValueError(f"dtype must be one of {DTYPES}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def replace(self, **kwargs):
        return TrainConfig.from_dict({**self.to_dict(), **kwargs})


# Useful starting points: 'balanced' mixes every loss evenly; the
# language-heavy variant leans on direct query reconstruction, which
# suits data with many proposals per image.
PRESETS = {
    "balanced": {},
    "language-heavy": {"alpha": 0.001, "beta": 1.0, "gamma": 30.0, "lambda_": 1.0},
}


def preset(name: str) -> TrainConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return TrainConfig.from_dict(PRESETS[name])
