"""Run configuration: one TOML file, per-kind defaults, content-based hashing.

The config hash stamped into derived files covers everything that can change
output bytes — knobs, seeds, template contents, fixture contents, corpus
contents — and deliberately excludes filesystem paths and credentials, so
the same inputs in a different directory hash (and therefore serialize)
identically. Endpoint credentials come only from the environment variable
named by ``api_key_env``; they are never read from the file itself.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .kinds import PIPELINE_KINDS, PipelineKind, get_kind

INGEST_FORMATS = ("delimited_table", "json_lines", "plain_dir")
GRANULARITIES = ("sentence", "paragraph", "full_text")
PROFILES = ("mock", "http", "replay")
AGREEMENT_MODES = ("lenient", "strict")


class ConfigError(Exception):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass
class RunConfig:
    config_dir: Path
    pipeline_kind: str
    run_dir: Path
    seed: int
    corpus_input: Path
    corpus_format: str
    granularity: str
    abbreviations: Path | None
    token_limit: int
    chars_per_token: int
    profile: str
    base_url: str
    model: str
    api_key_env: str
    mock_fixtures: Path | None
    replay_from: Path | None
    transport_attempts: int
    backoff_base: float
    timeout: float
    max_attempts: int
    workers: int
    max_output_tokens: int
    temperatures: dict[str, float]
    batch_size: int
    carryover_fraction: float
    classes_per_call_cap: int
    strip_name_prefixes: list[str]
    tie_cap: int
    templates_dir: Path | None
    eval_gold: Path | None
    eval_coder_a: Path | None
    eval_coder_b: Path | None
    eval_agreement: str

    @property
    def kind(self) -> PipelineKind:
        return get_kind(self.pipeline_kind)

    def api_key(self) -> str:
        if self.api_key_env:
            return os.environ.get(self.api_key_env, "")
        return ""

    def temperature_for(self, stage: str) -> float:
        group = {
            "detect_1": "detect",
            "detect_2": "detect",
            "summarize": "summarize",
            "classgen": "classgen",
            "classify_summarize": "classify",
            "classify_fit": "classify",
            "classify_final": "classify",
        }[stage]
        return self.temperatures[group]


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else (base / p)


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a config file, reporting all problems at once."""
    path = Path(path)
    errors: list[str] = []
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"]) from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"config file is not valid TOML: {exc}"]) from None

    base = path.parent.resolve()

    def section(name: str) -> dict:
        value = data.get(name, {})
        if not isinstance(value, dict):
            errors.append(f"[{name}] must be a table")
            return {}
        return value

    run = section("run")
    corpus = section("corpus")
    endpoint = section("endpoint")
    stages = section("stages")
    classgen = section("classgen")
    classify = section("classify")
    templates = section("templates")
    eval_sec = section("eval")

    pipeline_kind = run.get("pipeline_kind", "")
    if pipeline_kind not in PIPELINE_KINDS:
        errors.append(
            f"run.pipeline_kind must be one of {', '.join(PIPELINE_KINDS)}; got {pipeline_kind!r}"
        )
        kind = None
    else:
        kind = get_kind(pipeline_kind)

    run_dir_raw = run.get("dir", "")
    if not run_dir_raw:
        errors.append("run.dir is required")
    seed = run.get("seed", 0)
    if not isinstance(seed, int):
        errors.append("run.seed must be an integer")
        seed = 0

    corpus_input_raw = corpus.get("input", "")
    if not corpus_input_raw:
        errors.append("corpus.input is required")
    corpus_format = corpus.get("format", "delimited_table")
    if corpus_format not in INGEST_FORMATS:
        errors.append(f"corpus.format must be one of {', '.join(INGEST_FORMATS)}; got {corpus_format!r}")
    granularity = corpus.get("granularity", "") or (kind.granularity if kind else "")
    if granularity and granularity not in GRANULARITIES:
        errors.append(f"corpus.granularity must be one of {', '.join(GRANULARITIES)}; got {granularity!r}")
    token_limit = corpus.get("token_limit", 4096)
    if not isinstance(token_limit, int) or token_limit <= 0:
        errors.append("corpus.token_limit must be a positive integer")
    chars_per_token = corpus.get("chars_per_token", 4)
    if not isinstance(chars_per_token, int) or chars_per_token <= 0:
        errors.append("corpus.chars_per_token must be a positive integer")

    profile = endpoint.get("profile", "mock")
    if profile not in PROFILES:
        errors.append(f"endpoint.profile must be one of {', '.join(PROFILES)}; got {profile!r}")
    base_url = endpoint.get("base_url", "")
    model = endpoint.get("model", "")
    if profile == "http":
        if not base_url:
            errors.append("endpoint.base_url is required for the http profile")
        if not model:
            errors.append("endpoint.model is required for the http profile")
    mock_fixtures_raw = endpoint.get("mock_fixtures", "")
    if profile == "mock" and not mock_fixtures_raw:
        errors.append("endpoint.mock_fixtures is required for the mock profile")
    replay_from_raw = endpoint.get("replay_from", "")
    if profile == "replay" and not replay_from_raw:
        errors.append("endpoint.replay_from is required for the replay profile")
    transport_attempts = endpoint.get("transport_attempts", 3)
    if not isinstance(transport_attempts, int) or transport_attempts < 1:
        errors.append("endpoint.transport_attempts must be a positive integer")
    backoff_base = float(endpoint.get("backoff_base", 0.5))
    timeout = float(endpoint.get("timeout", 60.0))

    max_attempts = stages.get("max_attempts", 3)
    if not isinstance(max_attempts, int) or max_attempts < 1:
        errors.append("stages.max_attempts must be a positive integer")
    workers = stages.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        errors.append("stages.workers must be a positive integer")
    max_output_tokens = stages.get("max_output_tokens", 1024)
    if not isinstance(max_output_tokens, int) or max_output_tokens <= 0:
        errors.append("stages.max_output_tokens must be a positive integer")
    temperatures = {
        "detect": float(stages.get("temperature_detect", 0.0)),
        "summarize": float(stages.get("temperature_summarize", 0.0)),
        "classgen": float(stages.get("temperature_classgen", 0.7)),
        "classify": float(stages.get("temperature_classify", 0.0)),
    }
    for name, temp in temperatures.items():
        if temp < 0 or temp > 2.0:
            errors.append(f"stages.temperature_{name} must be in [0, 2.0]")

    batch_size = classgen.get("batch_size", 0) or (kind.batch_size if kind else 0)
    if not isinstance(batch_size, int) or batch_size < 1:
        errors.append("classgen.batch_size must be a positive integer")
    carryover_fraction = classgen.get("carryover_fraction", -1.0)
    if isinstance(carryover_fraction, int):
        carryover_fraction = float(carryover_fraction)
    if carryover_fraction < 0:
        carryover_fraction = kind.carryover_fraction if kind else 0.2
    if not (0 <= carryover_fraction < 1):
        errors.append("classgen.carryover_fraction must be in [0, 1)")
    classes_per_call_cap = classgen.get("classes_per_call_cap", 0) or (
        kind.classes_per_call_cap if kind else 0
    )
    if not isinstance(classes_per_call_cap, int) or classes_per_call_cap < 1:
        errors.append("classgen.classes_per_call_cap must be a positive integer")
    strip_name_prefixes = classgen.get("strip_name_prefixes", [])
    if not isinstance(strip_name_prefixes, list) or not all(
        isinstance(p, str) for p in strip_name_prefixes
    ):
        errors.append("classgen.strip_name_prefixes must be a list of strings")
        strip_name_prefixes = []

    tie_cap = classify.get("tie_cap", 4)
    if not isinstance(tie_cap, int) or tie_cap < 1:
        errors.append("classify.tie_cap must be a positive integer")

    eval_agreement = eval_sec.get("agreement", "lenient")
    if eval_agreement not in AGREEMENT_MODES:
        errors.append(f"eval.agreement must be one of {', '.join(AGREEMENT_MODES)}")

    abbreviations_raw = corpus.get("abbreviations", "")
    templates_dir_raw = templates.get("dir", "")

    cfg = RunConfig(
        config_dir=base,
        pipeline_kind=pipeline_kind,
        run_dir=_resolve(base, run_dir_raw) if run_dir_raw else base,
        seed=seed,
        corpus_input=_resolve(base, corpus_input_raw) if corpus_input_raw else base,
        corpus_format=corpus_format,
        granularity=granularity or "sentence",
        abbreviations=_resolve(base, abbreviations_raw) if abbreviations_raw else None,
        token_limit=token_limit if isinstance(token_limit, int) else 4096,
        chars_per_token=chars_per_token if isinstance(chars_per_token, int) else 4,
        profile=profile,
        base_url=base_url,
        model=model,
        api_key_env=endpoint.get("api_key_env", ""),
        mock_fixtures=_resolve(base, mock_fixtures_raw) if mock_fixtures_raw else None,
        replay_from=_resolve(base, replay_from_raw) if replay_from_raw else None,
        transport_attempts=transport_attempts if isinstance(transport_attempts, int) else 3,
        backoff_base=backoff_base,
        timeout=timeout,
        max_attempts=max_attempts if isinstance(max_attempts, int) else 3,
        workers=workers if isinstance(workers, int) else 1,
        max_output_tokens=max_output_tokens if isinstance(max_output_tokens, int) else 1024,
        temperatures=temperatures,
        batch_size=batch_size if isinstance(batch_size, int) else 50,
        carryover_fraction=carryover_fraction,
        classes_per_call_cap=classes_per_call_cap if isinstance(classes_per_call_cap, int) else 9,
        strip_name_prefixes=strip_name_prefixes,
        tie_cap=tie_cap if isinstance(tie_cap, int) else 4,
        templates_dir=_resolve(base, templates_dir_raw) if templates_dir_raw else None,
        eval_gold=_resolve(base, eval_sec["gold"]) if eval_sec.get("gold") else None,
        eval_coder_a=_resolve(base, eval_sec["coder_a"]) if eval_sec.get("coder_a") else None,
        eval_coder_b=_resolve(base, eval_sec["coder_b"]) if eval_sec.get("coder_b") else None,
        eval_agreement=eval_agreement,
    )

    # existence checks last, so shape errors surface even when paths are wrong
    if corpus_input_raw and not cfg.corpus_input.exists():
        errors.append(f"corpus.input does not exist: {cfg.corpus_input}")
    if profile == "mock" and cfg.mock_fixtures is not None and not cfg.mock_fixtures.is_file():
        errors.append(f"endpoint.mock_fixtures does not exist: {cfg.mock_fixtures}")
    if profile == "replay" and cfg.replay_from is not None and not (cfg.replay_from / "run.json").is_file():
        errors.append(f"endpoint.replay_from is not a run directory: {cfg.replay_from}")
    if cfg.abbreviations is not None and not cfg.abbreviations.is_file():
        errors.append(f"corpus.abbreviations does not exist: {cfg.abbreviations}")
    if cfg.templates_dir is not None and not cfg.templates_dir.is_dir():
        errors.append(f"templates.dir does not exist: {cfg.templates_dir}")

    if errors:
        raise ConfigError(errors)
    return cfg


def _file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _corpus_digest(cfg: RunConfig) -> str:
    if cfg.corpus_format == "plain_dir":
        parts = [
            f"{p.name}:{_file_digest(p)}" for p in sorted(cfg.corpus_input.glob("*.txt"))
        ]
        return hashlib.sha256("\n".join(parts).encode("utf-8")).hexdigest()
    return _file_digest(cfg.corpus_input)


def compute_config_hash(cfg: RunConfig, template_hashes: dict[str, str]) -> str:
    """Digest of everything that can change derived bytes; no paths, no secrets."""
    payload = {
        "pipeline_kind": cfg.pipeline_kind,
        "seed": cfg.seed,
        "corpus": {
            "format": cfg.corpus_format,
            "granularity": cfg.granularity,
            "digest": _corpus_digest(cfg),
            "abbreviations_digest": _file_digest(cfg.abbreviations) if cfg.abbreviations else "builtin",
            "token_limit": cfg.token_limit,
            "chars_per_token": cfg.chars_per_token,
        },
        "endpoint": {
            "profile": cfg.profile,
            "model": cfg.model,
            "mock_fixtures_digest": _file_digest(cfg.mock_fixtures)
            if cfg.profile == "mock" and cfg.mock_fixtures
            else "",
            "transport_attempts": cfg.transport_attempts,
        },
        "stages": {
            "max_attempts": cfg.max_attempts,
            "workers": cfg.workers,
            "max_output_tokens": cfg.max_output_tokens,
            "temperatures": cfg.temperatures,
        },
        "classgen": {
            "batch_size": cfg.batch_size,
            "carryover_fraction": cfg.carryover_fraction,
            "classes_per_call_cap": cfg.classes_per_call_cap,
            "strip_name_prefixes": cfg.strip_name_prefixes,
        },
        "classify": {"tie_cap": cfg.tie_cap},
        "templates": dict(sorted(template_hashes.items())),
    }
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
