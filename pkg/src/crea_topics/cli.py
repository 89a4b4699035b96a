"""Command-line entry point: ``crea-topics <subcommand> --config run.yaml``.

Each subcommand writes its artifacts plus ``manifest_<subcommand>.json`` into
the output directory. Config keys (YAML mapping; relative paths are resolved
against the config file's directory)::

    name: abstracts               # dataset label in stats.csv
    dataset: docs/                # directory of <id>.txt files
    annotations: annotations.tsv  # '#doc <id>' grouped surface/lemma/pos rows
    allowed_pos: [NN, NNS, ...]
    disambiguation: {fixture: terms.json, base_url: ..., lang: EN}
    coherence_threshold: 0.05
    counting: occurrence          # or presence
    term_matrix: matrix.csv       # optional; skips the extract step
    strategies: [High]
    betas: [0.0, 1.0]
    ks: [2, 4]                    # or "2-10" / "2:40:2"
    features: similarity          # or membership
    concept_ceiling: 1000000
    llm: {batch_size: 3, mock_dir: mock/, base_url: ..., model: ..., temperature: 0}
    label_clusters: false         # compare: also ask the LLM to label FCA clusters
    strict: false
    jobs: 1
    out: out/
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy
import yaml

from . import __version__
from .binarize import BinarizationSpec, binarize_matrix, retained_terms
from .corpus import (
    DEFAULT_ALLOWED_POS,
    Corpus,
    Document,
    apply_pos_filter,
    corpus_stats,
    load_annotated_corpus,
    load_documents,
)
from .errors import ConfigError, CreaError, DomainError, PipelineError
from .fca import enumerate_concepts, write_concepts_jsonl
from .llm_topics import (
    ChatClientConfig,
    ChatCompletionClient,
    LLMConfig,
    MockClient,
    Topic,
    parse_label_lines,
    render_prompt,
    run_llm_pipeline,
    topics_report,
    write_transcript,
)
from .simcluster import cluster_terms, conceptual_similarity
from .term_extraction import (
    DEFAULT_COHERENCE_THRESHOLD,
    DisambiguationConfig,
    TermFrequencyMatrix,
    build_term_matrix,
    fetch_disambiguation,
    filter_coherence,
    make_term_source,
    write_terms_jsonl,
)
from .validity import sweep, sweep_to_markdown, write_sweep_csv

log = logging.getLogger("crea_topics")

SUBCOMMANDS = ("stats", "extract", "binarize", "concepts", "cluster", "sweep", "llm", "compare")
_PATH_KEYS = ("dataset", "annotations", "term_matrix", "out")


@dataclass
class RunConfig:
    name: str = "dataset"
    dataset: str | None = None
    annotations: str | None = None
    allowed_pos: list[str] = field(default_factory=lambda: sorted(DEFAULT_ALLOWED_POS))
    disambiguation: dict = field(default_factory=dict)
    coherence_threshold: float = DEFAULT_COHERENCE_THRESHOLD
    counting: str = "occurrence"
    term_matrix: str | None = None
    strategies: list[str] = field(default_factory=lambda: ["High"])
    betas: list[float] = field(default_factory=lambda: [1.0])
    ks: list[int] = field(default_factory=lambda: [8])
    features: str = "similarity"
    concept_ceiling: int = 1_000_000
    llm: dict = field(default_factory=dict)
    label_clusters: bool = False
    strict: bool = False
    jobs: int = 1
    offline: bool = False
    out: str = "out"

    @property
    def specs(self) -> list[BinarizationSpec]:
        return [BinarizationSpec(s, float(b)) for s in self.strategies for b in self.betas]

    def echo(self) -> dict:
        return dataclasses.asdict(self)


def parse_k_range(value) -> list[int]:
    """``[2, 4]``, ``"2,4"``, ``"2-10"`` (inclusive) or ``"2:40:2"`` (inclusive stop)."""
    text = str(value).strip()
    try:
        if isinstance(value, int):
            ks = [value]
        elif isinstance(value, (list, tuple)):
            ks = [int(v) for v in value]
        elif ":" in text:
            parts = [int(p) for p in text.split(":")]
            step = parts[2] if len(parts) > 2 else 1
            ks = list(range(parts[0], parts[1] + 1, step))
        elif "-" in text and "," not in text:
            lo, hi = (int(p) for p in text.split("-", 1))
            ks = list(range(lo, hi + 1))
        else:
            ks = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse k range {value!r}") from None
    if not ks or min(ks) < 1:
        raise ConfigError(f"k range {value!r} must list cluster counts >= 1")
    return ks


def _split_list(value) -> list[str]:
    if isinstance(value, (list, tuple)):
        return [str(v) for v in value]
    return [p.strip() for p in str(value).split(",") if p.strip()]


def load_config(path: str | None, overrides: dict) -> RunConfig:
    raw: dict = {}
    base = Path.cwd()
    if path:
        cfg_path = Path(path)
        if not cfg_path.is_file():
            raise ConfigError(f"config file not found: {cfg_path}")
        raw = yaml.safe_load(cfg_path.read_text(encoding="utf-8")) or {}
        if not isinstance(raw, dict):
            raise ConfigError(f"{cfg_path}: top level must be a mapping")
        base = cfg_path.resolve().parent
    raw.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")

    def resolve(p):
        return None if p is None else str((base / p).resolve()) if not Path(p).is_absolute() else str(p)

    for key in _PATH_KEYS:
        if key in raw:
            raw[key] = resolve(raw[key])
    for section, keys in (("disambiguation", ("fixture",)), ("llm", ("mock_dir",))):
        if isinstance(raw.get(section), dict):
            raw[section] = dict(raw[section])
            for k in keys:
                if raw[section].get(k):
                    raw[section][k] = resolve(raw[section][k])
    if "ks" in raw:
        raw["ks"] = parse_k_range(raw["ks"])
    if "betas" in raw:
        raw["betas"] = [float(b) for b in _split_list(raw["betas"])]
    if "strategies" in raw:
        raw["strategies"] = _split_list(raw["strategies"])
    cfg = RunConfig(**raw)
    if "out" not in raw:
        cfg.out = str((base / cfg.out).resolve())
    try:
        cfg.specs  # validates strategy names and betas early
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    return cfg


# --- helpers -------------------------------------------------------------


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_inputs(paths: Sequence[str | None]) -> dict[str, str]:
    out = {}
    for p in paths:
        if not p:
            continue
        path = Path(p)
        if path.is_file():
            out[path.name] = _sha256(path)
        elif path.is_dir():
            for f in sorted(path.rglob("*")):
                if f.is_file():
                    out[str(f.relative_to(path.parent))] = _sha256(f)
    return dict(sorted(out.items()))


class Run:
    def __init__(self, command: str, cfg: RunConfig):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs: list[str | None] = []
        self.extra: dict = {}
        self.artifacts: list[str] = []

    def path(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.out / name

    def write_manifest(self) -> None:
        manifest = {
            "command": self.command,
            "config": self.cfg.echo(),
            "inputs": _hash_inputs(self.inputs),
            "artifacts": sorted(set(self.artifacts)),
            "versions": {
                "crea_topics": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            **self.extra,
        }
        text = json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
        (self.out / f"manifest_{self.command}.json").write_text(text, encoding="utf-8")


def _require(value, what: str):
    if not value:
        raise ConfigError(f"missing config value: {what}")
    return value


def _documents(run: Run) -> dict[str, str]:
    dataset = _require(run.cfg.dataset, "dataset")
    run.inputs.append(dataset)
    return load_documents(dataset)


def _annotated(run: Run) -> Corpus:
    texts = _documents(run)
    ann = _require(run.cfg.annotations, "annotations")
    run.inputs.append(ann)
    with open(ann, encoding="utf-8") as fh:
        corpus = load_annotated_corpus(texts, fh)
    return apply_pos_filter(corpus, run.cfg.allowed_pos)


def _term_matrix(run: Run) -> TermFrequencyMatrix:
    if run.cfg.term_matrix:
        run.inputs.append(run.cfg.term_matrix)
        return TermFrequencyMatrix.from_csv(run.cfg.term_matrix).drop_empty_columns()
    return _extract(run)


def _extract(run: Run) -> TermFrequencyMatrix:
    cfg = run.cfg
    texts = _documents(run)
    corpus = Corpus(tuple(Document(i, t) for i, t in texts.items()))
    dis = DisambiguationConfig(**{**cfg.disambiguation, "jobs": cfg.jobs})
    source = make_term_source(dis, offline=cfg.offline)
    if dis.fixture:
        run.inputs.append(dis.fixture)
    terms = fetch_disambiguation(corpus, source, jobs=cfg.jobs)
    kept = filter_coherence(terms, cfg.coherence_threshold)
    matrix = build_term_matrix(kept, corpus, unit=cfg.counting)
    run.extra["disambiguation_request"] = source.request_params
    run.extra["terms"] = {"fetched": len(terms), "kept": len(kept), "distinct": matrix.shape[1]}
    write_terms_jsonl(kept, run.path("terms.jsonl"))
    matrix.to_csv(run.path("term_matrix.csv"))
    return matrix


def _fmt_beta(b: float) -> str:
    return f"{b:.2f}"


def _write_rows(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# --- subcommands ---------------------------------------------------------


def cmd_stats(run: Run) -> None:
    st = corpus_stats(_annotated(run))
    row = st.as_row()
    _write_rows(
        run.path("stats.csv"),
        ["dataset", *row],
        [[run.cfg.name, st.total_tokens, st.total_unique_tokens,
          f"{st.avg_tokens_per_doc:.4f}", f"{st.avg_unique_tokens_per_doc:.4f}",
          f"{st.unique_token_ratio:.4f}", f"{st.hapax_ratio:.4f}"]],
    )


def cmd_extract(run: Run) -> None:
    _extract(run)


def _contexts(run: Run):
    matrix = _term_matrix(run)
    for spec in run.cfg.specs:
        n_terms, ctx = retained_terms(binarize_matrix(matrix, spec))
        yield spec, n_terms, ctx


def cmd_binarize(run: Run) -> None:
    rows = []
    for spec, n_terms, ctx in _contexts(run):
        rows.append([spec.strategy.value, _fmt_beta(spec.beta), n_terms])
        ctx.to_csv(run.path(f"context_{spec.label}.csv"))
        run.path(f"context_{spec.label}.cxt").write_text(ctx.to_cxt(), encoding="utf-8")
    _write_rows(run.path("binarize.csv"), ["strategy", "beta", "terms"], rows)


def cmd_concepts(run: Run) -> None:
    rows = []
    for spec, n_terms, ctx in _contexts(run):
        concepts = enumerate_concepts(ctx, ceiling=run.cfg.concept_ceiling)
        write_concepts_jsonl(concepts, run.path(f"concepts_{spec.label}.jsonl"), ctx)
        rows.append([spec.strategy.value, _fmt_beta(spec.beta), n_terms, len(concepts)])
    _write_rows(run.path("concepts.csv"), ["strategy", "beta", "terms", "concepts"], rows)


def _cluster_one(run: Run, spec, ctx):
    concepts = enumerate_concepts(ctx, ceiling=run.cfg.concept_ceiling)
    ks = [k for k in run.cfg.ks if 1 <= k <= len(ctx.attributes)]
    skipped = sorted(set(run.cfg.ks) - set(ks))
    if skipped:
        log.warning("%s: k values %s exceed the %d retained terms", spec.label, skipped, len(ctx.attributes))
    if len(ctx.attributes) < 2:
        raise ConfigError(f"{spec.label}: fewer than 2 terms retained, nothing to cluster")
    _, dendro, assignments = cluster_terms(ctx, concepts, ks, run.cfg.features)
    return concepts, dendro, assignments


def cmd_cluster(run: Run) -> None:
    for spec, _, ctx in _contexts(run):
        concepts, dendro, assignments = _cluster_one(run, spec, ctx)
        conceptual_similarity(concepts, ctx.attributes).to_csv(run.path(f"similarity_{spec.label}.csv"))
        run.path(f"dendrogram_{spec.label}.json").write_text(dendro.to_json() + "\n", encoding="utf-8")
        for k, a in assignments.items():
            a.to_csv(run.path(f"assignments_{spec.label}_k{k}.csv"))


def cmd_sweep(run: Run) -> None:
    cfg = run.cfg
    rows = sweep(
        _term_matrix(run), cfg.strategies, cfg.betas, cfg.ks,
        features=cfg.features, jobs=cfg.jobs, ceiling=cfg.concept_ceiling,
    )
    write_sweep_csv(rows, run.path("sweep.csv"))
    run.path("sweep.md").write_text(sweep_to_markdown(rows), encoding="utf-8")
    errors = [r for r in rows if r.error]
    if errors:
        with open(run.path("sweep_errors.jsonl"), "w", encoding="utf-8") as fh:
            for r in errors:
                fh.write(json.dumps({"strategy": r.strategy, "beta": r.beta, "k": r.k, "error": r.error}) + "\n")


def _llm_client(run: Run):
    llm = run.cfg.llm
    if llm.get("mock_dir"):
        run.inputs.append(llm["mock_dir"])
        return MockClient(llm["mock_dir"])
    if run.cfg.offline:
        raise ConfigError("offline run requested but no llm.mock_dir configured")
    keys = {f.name for f in dataclasses.fields(ChatClientConfig)}
    return ChatCompletionClient(ChatClientConfig(**{k: v for k, v in llm.items() if k in keys}))


def _llm_run(run: Run):
    texts = _documents(run)
    client = _llm_client(run)
    config = LLMConfig(
        batch_size=int(run.cfg.llm.get("batch_size", 5)), strict=run.cfg.strict, jobs=run.cfg.jobs
    )
    try:
        result = run_llm_pipeline(texts, client, config)
    except PipelineError as exc:
        write_transcript(exc.transcript, run.path("transcript.jsonl"))
        raise
    write_transcript(result.transcript, run.path("transcript.jsonl"))
    run.extra["llm_calls"] = len(result.transcript)
    return client, result


def cmd_llm(run: Run) -> None:
    _, result = _llm_run(run)
    run.path("topics.md").write_text(topics_report(result.topics), encoding="utf-8")
    payload = [
        {"index": lt.topic.index, "keywords": list(lt.topic.keywords),
         "label": lt.label, "description": lt.description}
        for lt in result.topics
    ]
    run.path("topics.json").write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def cmd_compare(run: Run) -> None:
    spec, _, ctx = next(iter(_contexts(run)))
    k = run.cfg.ks[0]
    _, _, assignments = _cluster_one(run, spec, ctx)
    if k not in assignments:
        raise ConfigError(f"k={k} exceeds the {len(ctx.attributes)} terms retained by {spec.label}")
    clusters = assignments[k].clusters()
    client, result = _llm_run(run)

    labels = {}
    if run.cfg.label_clusters:
        topics = [Topic(lab, tuple(ctx.attributes[i] for i in members)) for lab, members in clusters.items()]
        reply = client.complete([{"role": "user", "content": render_prompt("label", topics)}])
        labels = {lt.topic.index: lt for lt in parse_label_lines(reply, topics, strict=run.cfg.strict)}

    lines = [f"# FCA clusters vs LLM topics ({run.cfg.name})", ""]
    lines += [f"## FCA clusters ({spec.strategy.value} strategy, beta = {spec.beta:.2f}, k = {k})", ""]
    lines += ["| Topic | Label / Terms |", "|---|---|"]
    for lab, members in clusters.items():
        if lab in labels:
            lines.append(f"| {lab} | **{labels[lab].label}** - {labels[lab].description} |")
            lines.append(f"| | *{', '.join(ctx.attributes[i] for i in members)}* |")
        else:
            lines.append(f"| {lab} | *{', '.join(ctx.attributes[i] for i in members)}* |")
    lines.append("")
    report = "\n".join(lines) + "\n" + topics_report(result.topics)
    run.path("compare.md").write_text(report, encoding="utf-8")


COMMANDS = {
    "stats": cmd_stats,
    "extract": cmd_extract,
    "binarize": cmd_binarize,
    "concepts": cmd_concepts,
    "cluster": cmd_cluster,
    "sweep": cmd_sweep,
    "llm": cmd_llm,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crea-topics", description=__doc__.split("\n")[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--out", help="output directory")
    p.add_argument("--strategy", help="comma-separated strategies (Direct, Low, High, Medium)")
    p.add_argument("--beta", help="comma-separated beta values")
    p.add_argument("--k", help="cluster counts: '2,4', '2-10' or '2:40:2'")
    p.add_argument("--strict", action="store_true", default=None, help="strict LLM output parsing")
    p.add_argument("--jobs", type=int, help="parallelism bound")
    p.add_argument("--offline", action="store_true", default=None, help="never contact remote services")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    overrides = {
        # command-line paths are relative to the working directory, not the config file
        "out": str(Path(args.out).resolve()) if args.out else None,
        "strategies": args.strategy,
        "betas": args.beta,
        "ks": args.k,
        "strict": args.strict,
        "jobs": args.jobs,
        "offline": args.offline,
    }
    try:
        cfg = load_config(args.config, overrides)
        run = Run(args.subcommand, cfg)
        COMMANDS[args.subcommand](run)
        run.write_manifest()
    except (CreaError, OSError) as exc:
        kind = type(exc).__name__
        stage = getattr(exc, "stage", None)
        err = {"error": kind, "message": str(exc)}
        if stage:
            err["stage"] = stage
        print(json.dumps(err, ensure_ascii=False), file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
