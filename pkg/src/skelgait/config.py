"""Run configuration and its flat ``key=value`` text format.

Stdlib only: the CLI imports this module to read thread settings and must be
able to export BLAS/OpenMP environment caps before numpy is ever imported.
"""

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import InvalidConfig

MOTIONS = ("sinusoid", "linear")


@dataclass(frozen=True)
class RunConfig:
    # data
    layout: str = "kinect20"
    frames: int = 6
    trim: int = 10
    identities: int = 5
    train_per_identity: int = 20
    test_per_identity: int = 5
    raw_frames: int = 40
    noise: float = 0.005
    amplitude: float = 1.0
    scale_spread: float = 0.16
    yaw_range: float = 0.0
    motion: str = "sinusoid"
    # model
    feature_dim: int = 8
    heads: int = 8
    level_mix: float = 0.3
    hidden_dim: int = 128
    pred_hidden: int = 128
    rec_hidden: int = 128
    ccrl_sequential: bool = False
    # optimization
    lr: float = 0.005
    batch_size: int = 256
    l2_coeff: float = 0.0005
    seed: int = 1
    pretrain_epochs: int = 150
    finetune_epochs: int = 200
    patience: int = 0
    threads: int = 0

    def validate(self) -> "RunConfig":
        if self.frames < 2 or self.frames % 2:
            raise InvalidConfig("frames must be an even integer >= 2")
        if self.trim < 0:
            raise InvalidConfig("trim must be >= 0")
        if self.raw_frames <= 2 * self.trim + self.frames - 1:
            raise InvalidConfig(
                "raw_frames too small for the requested trim and window length"
            )
        if min(self.identities, self.train_per_identity, self.test_per_identity) < 1:
            raise InvalidConfig("synthetic dataset counts must be >= 1")
        if self.noise < 0 or self.amplitude < 0:
            raise InvalidConfig("noise and amplitude must be >= 0")
        if not 0.0 <= self.scale_spread < 1.0:
            raise InvalidConfig("scale_spread must be in [0, 1)")
        if not 0.0 <= self.yaw_range <= 3.141592653589793:
            raise InvalidConfig("yaw_range must be in [0, pi] radians")
        if self.motion not in MOTIONS:
            raise InvalidConfig(f"motion must be one of {MOTIONS}")
        if min(self.feature_dim, self.heads, self.hidden_dim,
               self.pred_hidden, self.rec_hidden) < 1:
            raise InvalidConfig("model dimensions must all be >= 1")
        if self.level_mix < 0:
            raise InvalidConfig("level_mix must be >= 0")
        if self.lr <= 0:
            raise InvalidConfig("lr must be > 0")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if self.l2_coeff < 0:
            raise InvalidConfig("l2_coeff must be >= 0")
        if min(self.pretrain_epochs, self.finetune_epochs) < 0:
            raise InvalidConfig("epoch counts must be >= 0")
        if self.patience < 0 or self.threads < 0:
            raise InvalidConfig("patience and threads must be >= 0")
        return self


def _parse_value(kind: type, key: str, text: str):
    if kind is bool:
        if text not in ("true", "false"):
            raise InvalidConfig(f"{key}: expected true or false, got {text!r}")
        return text == "true"
    try:
        return kind(text)
    except ValueError:
        raise InvalidConfig(f"{key}: cannot parse {text!r} as {kind.__name__}") from None


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def config_text(config: RunConfig) -> str:
    lines = [f"{f.name}={_format_value(getattr(config, f.name))}" for f in fields(config)]
    return "\n".join(lines) + "\n"


def save_config(config: RunConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(config_text(config))
    return path


def load_config(path) -> RunConfig:
    kinds = {f.name: f.type for f in fields(RunConfig)}
    # annotations are strings under `from __future__` elsewhere; resolve simply
    named = {"str": str, "int": int, "float": float, "bool": bool}
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidConfig(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, text = line.partition("=")
        key, text = key.strip(), text.strip()
        if key not in kinds:
            raise InvalidConfig(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise InvalidConfig(f"{path}:{lineno}: duplicate key {key!r}")
        kind = kinds[key]
        if isinstance(kind, str):
            kind = named[kind]
        values[key] = _parse_value(kind, key, text)
    return RunConfig(**values).validate()


def override(config: RunConfig, **changes) -> RunConfig:
    """Apply non-None keyword overrides and re-validate."""
    active = {k: v for k, v in changes.items() if v is not None}
    return replace(config, **active).validate() if active else config.validate()
