"""Run configuration, backend factories, and run manifests.

One JSON config file drives every pipeline stage; CLI flags override
file values, which override defaults. The effective config is hashed
(sha256 of its canonical JSON) and every stage manifest embeds that
hash, so downstream stages can refuse mixed-config inputs.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import __version__
from .augment import PROMPT_VERSION
from .embed import HashingEmbedder, HttpEmbeddingBackend
from .errors import ValidationError
from .llm import HttpChatBackend, MockChatBackend, MockEvaluatorBackend, MockProfile

DEFAULTS: dict[str, Any] = {
    "paths": {
        "corpus": "corpus.jsonl",
        "queries": "queries.jsonl",
        "qrels": "qrels.jsonl",
        "output_dir": "out",
    },
    "generator": {"type": "mock", "profile": "echo-oracle", "seed": 0},
    "evaluator": {"type": "mock", "policy": "content"},
    "embedder": {"type": "hashing", "dim": 1024, "seed": 0},
    "threshold": 9,
    "strategy": "tri",
    "components": ["original", "qa", "event"],
    "k_values": [1, 10],
    "seed": 42,
    "sample_size": None,
    "parallelism": 1,
    "language": "en",
    "ndcg_gain": "exp",
}


@dataclass
class RunConfig:
    data: dict[str, Any] = field(default_factory=lambda: json.loads(json.dumps(DEFAULTS)))

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        d = self.data
        if not -1 <= int(d["threshold"]) <= 10:
            raise ValidationError(f"threshold must be in [-1, 10], got {d['threshold']}")
        if d["strategy"] not in ("tri", "tmo"):
            raise ValidationError(f"strategy must be 'tri' or 'tmo', got {d['strategy']!r}")
        if d["language"] not in ("en", "zh"):
            raise ValidationError(f"language must be 'en' or 'zh', got {d['language']!r}")
        if not d["components"]:
            raise ValidationError("components must be non-empty")
        for c in d["components"]:
            if c not in ("original", "qa", "event"):
                raise ValidationError(f"unknown component {c!r}")
        if any(int(k) < 1 for k in d["k_values"]):
            raise ValidationError("k_values must be positive")

    # -- accessors ---------------------------------------------------------

    def path(self, name: str) -> Path:
        return Path(self.data["paths"][name])

    @property
    def output_dir(self) -> Path:
        return Path(self.data["paths"]["output_dir"])

    @property
    def threshold(self) -> int:
        return int(self.data["threshold"])

    @property
    def strategy(self) -> str:
        return self.data["strategy"]

    @property
    def components(self) -> tuple[str, ...]:
        return tuple(self.data["components"])

    @property
    def k_values(self) -> tuple[int, ...]:
        return tuple(int(k) for k in self.data["k_values"])

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def sample_size(self) -> int | None:
        size = self.data["sample_size"]
        return None if size is None else int(size)

    @property
    def parallelism(self) -> int:
        return max(1, int(self.data["parallelism"]))

    @property
    def language(self) -> str:
        return self.data["language"]

    @property
    def ndcg_gain(self) -> str:
        return self.data["ndcg_gain"]

    def config_hash(self) -> str:
        canonical = json.dumps(self.data, sort_keys=True, ensure_ascii=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    # -- backend factories ---------------------------------------------------

    def build_generator(self):
        return _build_chat_backend(self.data["generator"], role="generator")

    def build_evaluator(self):
        spec = self.data["evaluator"]
        if spec.get("type") == "mock":
            policy = spec.get("policy", "content")
            if policy == "content":
                return MockEvaluatorBackend()
            if isinstance(policy, int):
                return MockEvaluatorBackend(policy)
            if isinstance(policy, list):
                return MockEvaluatorBackend([int(x) for x in policy])
            raise ValidationError(f"unsupported evaluator policy {policy!r}")
        return _build_chat_backend(spec, role="evaluator")

    def build_embedder(self):
        spec = self.data["embedder"]
        kind = spec.get("type")
        if kind == "hashing":
            return HashingEmbedder(
                dim=int(spec.get("dim", 1024)), seed=int(spec.get("seed", 0))
            )
        if kind == "http":
            return HttpEmbeddingBackend(
                endpoint=spec["endpoint"],
                model=spec["model"],
                dim=int(spec["dim"]),
                api_key=_api_key(spec),
                batch_size=int(spec.get("batch_size", 32)),
                timeout=float(spec.get("timeout", 60.0)),
                max_retries=int(spec.get("max_retries", 3)),
            )
        raise ValidationError(f"unsupported embedder type {kind!r}")


def _api_key(spec: dict) -> str | None:
    env = spec.get("api_key_env")
    if not env:
        return None
    key = os.environ.get(env)
    if not key:
        raise ValidationError(f"environment variable {env} is not set")
    return key


def _build_chat_backend(spec: dict, role: str):
    kind = spec.get("type")
    if kind == "mock":
        profile_name = spec.get("profile", "echo-oracle")
        seed = int(spec.get("seed", 0))
        if profile_name == "echo-oracle":
            profile = MockProfile.echo_oracle()
        elif profile_name == "noisy":
            profile = MockProfile.noisy(float(spec.get("probability", 0.2)), seed)
        elif profile_name == "adversarial-low-score":
            profile = MockProfile.adversarial_low_score()
        else:
            raise ValidationError(f"unknown mock profile {profile_name!r}")
        return MockChatBackend(profile=profile, backend_id=f"mock-{role}")
    if kind == "http":
        return HttpChatBackend(
            endpoint=spec["endpoint"],
            model=spec["model"],
            api_key=_api_key(spec),
            timeout=float(spec.get("timeout", 120.0)),
            max_retries=int(spec.get("max_retries", 3)),
            backoff_base=float(spec.get("backoff_base", 0.5)),
        )
    raise ValidationError(f"unsupported {role} backend type {kind!r}")


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Defaults < config file < explicit overrides."""
    data = json.loads(json.dumps(DEFAULTS))
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ValidationError(f"config file not found: {p}")
        try:
            loaded = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ValidationError(f"{p}: malformed JSON config: {e}") from e
        _deep_update(data, loaded)
    if overrides:
        _deep_update(data, overrides)
    return RunConfig(data=data)


def _deep_update(base: dict, extra: dict) -> None:
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(
    stage: str,
    config: RunConfig,
    inputs: dict[str, Path],
    outputs: dict[str, Path],
    stats: dict[str, Any] | None = None,
) -> Path:
    manifest = {
        "stage": stage,
        "config": config.data,
        "config_hash": config.config_hash(),
        "inputs": {name: file_sha256(p) for name, p in sorted(inputs.items())},
        "outputs": {name: file_sha256(p) for name, p in sorted(outputs.items())},
        "stats": stats or {},
        "versions": {
            "package": __version__,
            "prompts": PROMPT_VERSION,
        },
    }
    path = config.output_dir / f"{stage}.manifest.json"
    path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return path


def read_manifest(output_dir: Path, stage: str) -> dict:
    path = output_dir / f"{stage}.manifest.json"
    if not path.exists():
        raise ValidationError(
            f"missing {path.name}: run the '{stage}' stage first"
        )
    return json.loads(path.read_text(encoding="utf-8"))
