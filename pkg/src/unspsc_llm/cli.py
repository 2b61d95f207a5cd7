"""Command-line pipeline: validate, classify, report, census, and templates.

Exit codes: 0 success, 2 input/schema error, 3 backend configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .cache import CACHE_FILENAME, ResponseCache, utc_now_iso
from .client import (
    MockBackend,
    MockOracleConfig,
    OpenAiBackend,
    classify_batch,
)
from .evaluation import (
    ClassificationResult,
    aggregate,
    result_from_dict,
    result_to_dict,
)
from .ingest import (
    DatasetSchema,
    EmptyFile,
    SchemaColumnMissing,
    census,
    load_dataset,
    sample,
)
from .parsing import (
    DEFAULT_REFUSAL_PHRASES,
    Outcome,
    ParsedPrediction,
    extract_code,
    load_refusal_phrases,
)
from .prompts import BUILTIN_TEMPLATE_IDS, UnknownTemplateId, builtin_template, load_template
from .reporting import FORMAT_EXTENSIONS, FORMATS, render_report
from .taxonomy import HierarchyLevel

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_BACKEND_CONFIG = 3

DEFAULT_API_KEY_ENV = "UNSPSC_LLM_API_KEY"
RESULTS_FILENAME = "results.jsonl"
MANIFEST_FILENAME = "run_manifest.json"

_INPUT_ERRORS = (FileNotFoundError, SchemaColumnMissing, EmptyFile, OSError, ValueError, TypeError)


@dataclass
class RunConfig:
    """Everything a classification sweep needs, snapshot into the manifest."""

    input: str | None = None
    schema: dict | None = None
    sample_size: int | None = None
    seed: int = 0
    templates: list[str] = field(default_factory=lambda: ["p1", "p2", "p3"])
    temperatures: list[float] = field(default_factory=lambda: [0.0, 0.5, 1.0])
    model: str = "gpt-4"
    backend: str = "mock"
    endpoint: str | None = None
    api_key_env: str = DEFAULT_API_KEY_ENV
    auth_header: str = "Authorization"
    parallelism: int = 4
    cache_dir: str | None = None
    out: str = "out"
    formats: list[str] = field(default_factory=lambda: list(FORMATS))
    refusal_phrases_file: str | None = None
    max_output_tokens: int = 64
    mock_refusal_rate: float = 0.0
    mock_corruption: dict[str, float] = field(default_factory=dict)

    def validate(self) -> None:
        if not self.input:
            raise ValueError("--input is required")
        if not self.templates:
            raise ValueError("at least one template is required")
        if any(not 0.0 <= t <= 2.0 for t in self.temperatures):
            raise ValueError("temperatures must be in [0, 2]")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if self.backend not in ("openai", "mock"):
            raise ValueError(f"unknown backend {self.backend!r}")
        for fmt in self.formats:
            if fmt not in FORMATS:
                raise ValueError(f"unknown format {fmt!r}")
        for name in self.mock_corruption:
            if name.upper() not in HierarchyLevel.__members__:
                raise ValueError(f"unknown hierarchy level {name!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return cls(**data)


def _parse_list(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def _parse_floats(text: str) -> list[float]:
    return [float(item) for item in _parse_list(text)]


def _parse_rates(text: str) -> dict[str, float]:
    rates: dict[str, float] = {}
    for item in _parse_list(text):
        name, _, value = item.partition("=")
        if not value:
            raise argparse.ArgumentTypeError(f"expected LEVEL=RATE, got {item!r}")
        rates[name.strip().lower()] = float(value)
    return rates


def _load_json_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path} must contain a JSON object")
    return data


def _build_config(args: argparse.Namespace) -> RunConfig:
    """Layer defaults, then the optional config file, then explicit flags."""
    file_values: dict = {}
    if getattr(args, "config", None):
        file_values = _load_json_file(args.config)
        unknown = set(file_values) - set(RunConfig.__dataclass_fields__)
        if unknown:
            logger.warning("ignoring unknown config keys: %s", ", ".join(sorted(unknown)))
    values: dict = {}
    for f in RunConfig.__dataclass_fields__:
        if f in file_values:
            values[f] = file_values[f]
        flag_value = getattr(args, f, None)
        if flag_value is not None:
            values[f] = flag_value
    if getattr(args, "schema", None):
        values["schema"] = _load_json_file(args.schema)
    return RunConfig(**values)


def _schema_from(config: RunConfig) -> DatasetSchema:
    if config.schema:
        return DatasetSchema(**config.schema)
    return DatasetSchema()


def _load_records(config: RunConfig):
    records, report = load_dataset(config.input, _schema_from(config))
    if config.sample_size is not None:
        records = sample(records, config.sample_size, config.seed)
    return records, report


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        config = _build_config(args)
        records, report = _load_records(config)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    print(f"rows: {report.total_rows}  kept: {report.kept_count}  rejected: {report.rejected_count}")
    for reason, count in report.counts().items():
        print(f"  {reason.value}: {count}")
    for source_row, reason in report.rejections[:50]:
        print(f"  row {source_row}: {reason.value}")
    if report.rejected_count > 50:
        print(f"  ... and {report.rejected_count - 50} more")
    if config.sample_size is not None:
        print(f"sample: {len(records)} records (seed {config.seed})")
    return EXIT_OK


def cmd_census(args: argparse.Namespace) -> int:
    try:
        config = _build_config(args)
        records, _ = _load_records(config)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    counts = census(records)
    print(f"records: {len(records)}")
    for level in reversed(HierarchyLevel):
        print(f"unique {level.label} codes: {counts[level]}")
    if getattr(args, "out", None):
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = {level.label: counts[level] for level in HierarchyLevel}
        payload["records"] = len(records)
        (out_dir / "census.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return EXIT_OK


def cmd_templates(args: argparse.Namespace) -> int:
    for template_id in BUILTIN_TEMPLATE_IDS:
        template = builtin_template(template_id)
        print(f"=== {template.template_id} ({template.style}) ===")
        if template.system_text is not None:
            print("[system]")
            print(template.system_text)
        print("[user]")
        print(template.user_text)
        print()
    return EXIT_OK


def _resolve_templates(entries: list[str]):
    templates = []
    for entry in entries:
        if entry.startswith("@"):
            templates.append(load_template(entry[1:]))
        else:
            templates.append(builtin_template(entry))
    return templates


def _mock_backend(config: RunConfig, records) -> MockBackend:
    rates = {
        HierarchyLevel[name.upper()]: rate for name, rate in config.mock_corruption.items()
    }
    oracle = MockOracleConfig(
        gold={record.record_id: record.gold_code for record in records},
        corruption_rate_per_level=rates,
        refusal_rate=config.mock_refusal_rate,
        seed=config.seed,
    )
    return MockBackend(oracle)


def cmd_classify(args: argparse.Namespace) -> int:
    try:
        config = _build_config(args)
        config.validate()
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR

    api_key = None
    if config.backend == "openai":
        if not config.endpoint:
            print("error: --endpoint is required for the openai backend", file=sys.stderr)
            return EXIT_BACKEND_CONFIG
        api_key = os.environ.get(config.api_key_env)
        if not api_key:
            print(
                f"error: no credential found; set the {config.api_key_env} environment "
                "variable or point --api-key-env at the variable holding your key",
                file=sys.stderr,
            )
            return EXIT_BACKEND_CONFIG

    try:
        records, report = _load_records(config)
        templates = _resolve_templates(config.templates)
        if config.refusal_phrases_file:
            phrases = load_refusal_phrases(config.refusal_phrases_file)
        else:
            phrases = DEFAULT_REFUSAL_PHRASES
    except (UnknownTemplateId, *_INPUT_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    if report.rejected_count:
        logger.info("dropped %d rows during loading", report.rejected_count)

    if config.backend == "mock":
        backend = _mock_backend(config, records)
    else:
        backend = OpenAiBackend(
            endpoint=config.endpoint, api_key=api_key, auth_header=config.auth_header
        )

    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache_dir = Path(config.cache_dir) if config.cache_dir else out_dir / "cache"
    started_at = utc_now_iso()
    results_path = out_dir / RESULTS_FILENAME

    written = 0
    with ResponseCache.open(cache_dir / CACHE_FILENAME) as cache:
        with results_path.open("w", encoding="utf-8") as fh:
            for template in templates:
                for temperature in config.temperatures:
                    raw_results = classify_batch(
                        records,
                        template,
                        temperature,
                        config.model,
                        backend,
                        cache=cache,
                        parallelism=config.parallelism,
                        max_output_tokens=config.max_output_tokens,
                    )
                    if any(r.error and r.error.startswith("AuthFailed") for r in raw_results):
                        print(
                            f"error: the endpoint rejected the credential from "
                            f"{config.api_key_env}; aborting",
                            file=sys.stderr,
                        )
                        return EXIT_BACKEND_CONFIG
                    for record, raw in zip(records, raw_results):
                        if raw.error is not None:
                            prediction = ParsedPrediction(Outcome.UNPARSEABLE, "")
                        else:
                            prediction = extract_code(raw.response.text, phrases)
                        result = ClassificationResult.build(
                            record_id=record.record_id,
                            template_id=template.template_id,
                            temperature=temperature,
                            model=config.model,
                            prediction=prediction,
                            gold=record.gold_code,
                            error=raw.error,
                        )
                        fh.write(
                            json.dumps(result_to_dict(result), sort_keys=True, ensure_ascii=False)
                            + "\n"
                        )
                        written += 1

    manifest = {
        "config": config.to_dict(),
        "started_at": started_at,
        "finished_at": utc_now_iso(),
        "results_file": RESULTS_FILENAME,
        "records": len(records),
        "results": written,
    }
    (out_dir / MANIFEST_FILENAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {written} results to {results_path}")
    return EXIT_OK


def _read_results(path: Path) -> list[ClassificationResult]:
    results = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                results.append(result_from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"malformed results line {lineno}: {exc}") from exc
    return results


def cmd_report(args: argparse.Namespace) -> int:
    results_path = Path(args.results)
    try:
        results = _read_results(results_path)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    matrices = aggregate(results)
    formats = args.formats or list(FORMATS)
    for fmt in formats:
        if fmt not in FORMAT_EXTENSIONS:
            print(f"error: unknown format {fmt!r}", file=sys.stderr)
            return EXIT_INPUT_ERROR
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        extension = FORMAT_EXTENSIONS[fmt]
        if not matrices:
            path = out_dir / f"report.{extension}"
            path.write_text(render_report([], fmt), encoding="utf-8")
            written.append(path)
            continue
        for matrix in matrices:
            path = out_dir / f"report_{matrix.template_id}.{extension}"
            path.write_text(render_report([matrix], fmt), encoding="utf-8")
            written.append(path)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _add_input_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", help="purchase-order CSV path")
    parser.add_argument("--schema", help="JSON file overriding the dataset column mapping")
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--sample-size", dest="sample_size", type=int, help="records to sample")
    parser.add_argument("--seed", type=int, help="sampling / mock oracle seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unspsc-llm",
        description="Classify purchase-order items into UNSPSC codes with an LLM and "
        "score accuracy at every hierarchy level.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="load the dataset and summarize rejected rows")
    _add_input_flags(p_validate)
    p_validate.set_defaults(func=cmd_validate)

    p_census = sub.add_parser("census", help="count distinct gold codes per hierarchy level")
    _add_input_flags(p_census)
    p_census.add_argument("--out", help="directory for census.json")
    p_census.set_defaults(func=cmd_census)

    p_classify = sub.add_parser("classify", help="run the template x temperature sweep")
    _add_input_flags(p_classify)
    p_classify.add_argument(
        "--template",
        dest="templates",
        type=_parse_list,
        help="comma-separated template ids (p1,p2,p3) or @file for a custom template",
    )
    p_classify.add_argument(
        "--temperatures", type=_parse_floats, help="comma-separated temperatures, e.g. 0,0.5,1"
    )
    p_classify.add_argument("--model", help="model name sent to the backend")
    p_classify.add_argument("--backend", choices=["openai", "mock"], help="backend kind")
    p_classify.add_argument("--endpoint", help="chat-completions URL (openai backend)")
    p_classify.add_argument(
        "--api-key-env", dest="api_key_env", help=f"env var holding the key (default {DEFAULT_API_KEY_ENV})"
    )
    p_classify.add_argument(
        "--auth-header",
        dest="auth_header",
        help="credential header name; 'Authorization' sends a Bearer token, anything "
        "else (e.g. api-key) sends the key verbatim",
    )
    p_classify.add_argument("--parallelism", type=int, help="max in-flight requests")
    p_classify.add_argument("--cache-dir", dest="cache_dir", help="response cache directory")
    p_classify.add_argument("--out", help="output directory for results and manifest")
    p_classify.add_argument(
        "--max-output-tokens", dest="max_output_tokens", type=int, help="completion token cap"
    )
    p_classify.add_argument(
        "--refusal-phrases",
        dest="refusal_phrases_file",
        help="text file overriding refusal phrases, one per line",
    )
    p_classify.add_argument(
        "--mock-refusal-rate", dest="mock_refusal_rate", type=float, help="mock refusal probability"
    )
    p_classify.add_argument(
        "--mock-corruption",
        dest="mock_corruption",
        type=_parse_rates,
        help="mock corruption rates, e.g. commodity=1,class=0.5",
    )
    p_classify.set_defaults(func=cmd_classify)

    p_report = sub.add_parser("report", help="aggregate results into accuracy matrices")
    p_report.add_argument("--results", required=True, help="results.jsonl from classify")
    p_report.add_argument("--out", default="out", help="directory for report files")
    p_report.add_argument(
        "--format", dest="formats", type=_parse_list, help="comma-separated formats: markdown,csv,json"
    )
    p_report.set_defaults(func=cmd_report)

    p_templates = sub.add_parser("templates", help="print the built-in prompt texts")
    p_templates.set_defaults(func=cmd_templates)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
