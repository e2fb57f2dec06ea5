"""Training configuration shared by the model, trainer and CLI."""

from dataclasses import asdict, dataclass, fields

SUBWORD_MODES = ("none", "SW_ave", "SW_cnn")


class ConfigError(ValueError):
    pass


def canonical_mode(mode):
    for m in SUBWORD_MODES:
        if mode.lower() in (m.lower(), m.lower().replace("sw_", "")):
            return m
    raise ConfigError(f"subword_mode must be one of {SUBWORD_MODES}, got {mode!r}")


@dataclass
class TrainConfig:
    """Hyper-parameters; defaults follow the low-resource recipe."""

    epochs: int = 200
    batch_size: int = 16
    dim: int = 500
    enc_layers: int = 1
    dec_layers: int = 1
    dropout: float = 0.5
    clip: float = 5.0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    eval_every: int = 10
    init_scale: float = 0.1
    subword_mode: str = "none"
    subword_vocab_size: int = 1000
    cnn_window: int = 3
    csls_k: int = 10
    dice_min_count: int = 3
    dice_threshold: float = 0.8
    no_reconstruction: bool = False
    no_backward_decoder: bool = False
    no_weight_tying: bool = False
    no_dropout: bool = False
    no_word_embedding_term: bool = False

    def __post_init__(self):
        self.subword_mode = canonical_mode(self.subword_mode)
        for name in ("epochs", "subword_vocab_size", "dice_min_count"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        for name in ("batch_size", "dim", "enc_layers", "dec_layers", "cnn_window", "csls_k",
                     "eval_every"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.dim % 2:
            raise ConfigError("dim must be even (the encoder splits it over two directions)")
        if self.cnn_window % 2 == 0:
            raise ConfigError("cnn_window must be odd to preserve sequence length")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.clip <= 0 or self.lr <= 0:
            raise ConfigError("clip and lr must be positive")
        if self.no_word_embedding_term and self.subword_mode == "none":
            raise ConfigError("no_word_embedding_term needs a subword mode")

    @property
    def effective_dropout(self):
        return 0.0 if self.no_dropout else self.dropout

    def to_items(self):
        return [(k, v) for k, v in asdict(self).items()]

    @classmethod
    def from_mapping(cls, items):
        """Build from string values (``key=value`` text), coercing by field type."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in items.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(known[key].type, raw, key)
        return cls(**kwargs)


def _coerce(typ, raw, key):
    if not isinstance(raw, str):
        return raw
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw.strip()
