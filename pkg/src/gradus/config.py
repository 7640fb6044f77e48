"""Run configuration: one JSON file drives every pipeline command.

Seeds are mandatory so no command ever falls back to wall-clock entropy;
relative paths resolve against the config file's own directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .denoiser import DenoiserHyperparams
from .errors import PhraseParseError, PhraseValidationError
from .fusion import VoiceProfile
from .graph import FeatureFlags
from .pitch import KeyContext, parse_key, parse_pitch
from .rules import RuleConfig


@dataclass(frozen=True)
class RunConfig:
    corpus_dir: Path
    out_dir: Path
    master_seed: int
    train_seed: int
    schedule_T: int = 100
    schedule_s: float = 0.008
    denoiser: DenoiserHyperparams = field(default_factory=DenoiserHyperparams)
    features: FeatureFlags = field(default_factory=FeatureFlags)
    rules: RuleConfig = field(default_factory=RuleConfig)
    B: int = 40
    K: int = 8
    skeleton_mode: str = "whole-phrase"
    measures: int = 2
    home_key: KeyContext = field(default_factory=lambda: KeyContext("C", 0, "major"))
    templates_path: Optional[Path] = None
    voice_profiles: Optional[dict[int, VoiceProfile]] = None


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise PhraseParseError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise PhraseParseError(f"config {path} line {exc.lineno}: {exc.msg}") from exc
    base = path.parent

    def resolve(p: str) -> Path:
        candidate = Path(p)
        return candidate if candidate.is_absolute() else base / candidate

    for required in ("corpus_dir", "out_dir", "master_seed", "train_seed"):
        if required not in raw:
            raise PhraseValidationError(f"config is missing required key {required!r}")

    hp_keys = (
        "layers", "hidden_dim", "heads", "epochs", "batch_size",
        "learning_rate", "val_split",
    )
    hp_kwargs = {k: raw[k] for k in hp_keys if k in raw}
    hp_kwargs["T"] = int(raw.get("schedule_T", 100))
    features = FeatureFlags(**raw.get("features", {}))
    rules = RuleConfig(**raw.get("rules", {}))
    home = raw.get("home_key", {"tonic": "C", "mode": "major"})

    profiles = None
    if raw.get("voice_profiles"):
        profiles = {}
        for spec in raw["voice_profiles"]:
            profiles[int(spec["voice"])] = VoiceProfile(
                name=spec.get("name", f"voice{spec['voice']}"),
                central=parse_pitch(spec["central"]),
                low=parse_pitch(spec["low"]),
                high=parse_pitch(spec["high"]),
            )

    return RunConfig(
        corpus_dir=resolve(raw["corpus_dir"]),
        out_dir=resolve(raw["out_dir"]),
        master_seed=int(raw["master_seed"]),
        train_seed=int(raw["train_seed"]),
        schedule_T=int(raw.get("schedule_T", 100)),
        schedule_s=float(raw.get("schedule_s", 0.008)),
        denoiser=DenoiserHyperparams(**hp_kwargs),
        features=features,
        rules=rules,
        B=int(raw.get("B", 40)),
        K=int(raw.get("K", 8)),
        skeleton_mode=raw.get("skeleton_mode", "whole-phrase"),
        measures=int(raw.get("measures", 2)),
        home_key=parse_key(home["tonic"], home["mode"]),
        templates_path=resolve(raw["templates_path"]) if raw.get("templates_path") else None,
        voice_profiles=profiles,
    )
