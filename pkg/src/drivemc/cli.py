"""Command line front end.

Subcommands cover the full pipeline: ingest raw session files, estimate
chain models per group, run the test families, simulate trajectories,
export PRISM models, recover counts from printed percentage tables, and
serve the collection endpoint. Every command is deterministic given the
same inputs and seed; no output embeds timestamps or machine state.
"""

from __future__ import annotations

import hashlib
import json
import sys
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import click

from . import __version__
from .chain import (
    ChainModel,
    chain_from_counts,
    chain_from_dict,
    chain_to_count_csv,
    chain_to_dict,
    chain_to_percent_csv,
    estimate_chain,
    estimate_second_order,
    recover_counts,
    second_order_to_dict,
)
from .errors import DrivemcError, UndefinedRowError
from .ingest import Dataset, parse_datasets, serialize_dataset, to_state_sequences
from .prism import evaluate_property, export_dtmc, export_properties, self_check
from .reference import fixture_counts
from .simulate import propagate, sample_states
from .stats import (
    TestResult,
    compare_groups,
    test_homogeneity,
    test_order,
    test_stationarity,
)
from .types import (
    STATES,
    Environment,
    StudyConfig,
    load_study_config,
    study_config_from_dict,
)

_GROUP_FIELDS = ("environment", "sex", "info", "order")


def _load_config(path: Optional[str]) -> StudyConfig:
    if path is None:
        return load_study_config()
    with open(path, "r", encoding="utf-8") as handle:
        return study_config_from_dict(json.load(handle))


def _out_dir(ctx: click.Context) -> Path:
    out = Path(ctx.obj["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_dataset(inputs: Sequence[str], config: StudyConfig) -> Dataset:
    dataset = parse_datasets([Path(p) for p in inputs], config)
    if not dataset.traces:
        raise click.ClickException("no valid traces in input")
    return dataset


def _trace_group_value(trace, field: str) -> str:
    if field == "sex":
        return trace.profile.sex.value
    if field == "info":
        return trace.condition.info_level.value
    if field == "order":
        return trace.condition.scenario_order.value
    raise click.ClickException(f"unknown group field: {field}")


def _split_dataset(dataset: Dataset, fields: Sequence[str]) -> Dict[Tuple[str, ...], List]:
    groups: Dict[Tuple[str, ...], List] = {}
    for trace in dataset.traces:
        key = tuple(_trace_group_value(trace, f) for f in fields)
        groups.setdefault(key, []).append(trace)
    return groups


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for block in iter(lambda: handle.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _write_json(path: Path, payload) -> None:
    _write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _result_lines(result: TestResult) -> List[str]:
    lines = [
        f"  statistic = {result.statistic:.4f}",
        f"  df        = {result.df}",
        f"  p_value   = {result.p_value:.6g}",
    ]
    for note in result.notes:
        lines.append(f"  note: {note}")
    return lines


@click.group()
@click.version_option(version=__version__, prog_name="drivemc")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None, help="Scenario configuration JSON (defaults to the bundled study).")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for any randomized step.")
@click.option("--out", type=click.Path(file_okay=False), default=".", show_default=True, help="Directory for generated files.")
@click.pass_context
def main(ctx: click.Context, config_path: Optional[str], seed: int, out: str) -> None:
    """Estimate and validate scene-indexed driver state chains."""
    ctx.ensure_object(dict)
    ctx.obj["config"] = _load_config(config_path)
    ctx.obj["seed"] = seed
    ctx.obj["out"] = out


@main.command()
@click.option("--input", "inputs", multiple=True, required=True, type=click.Path(exists=True, dir_okay=False), help="Session file (JSON lines). Repeatable.")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None, help="Write rejection report JSON here.")
@click.pass_context
def ingest(ctx: click.Context, inputs: Sequence[str], report_path: Optional[str]) -> None:
    """Validate raw session files and write a clean dataset."""
    config = ctx.obj["config"]
    dataset = parse_datasets([Path(p) for p in inputs], config)
    out = _out_dir(ctx)
    if report_path is not None:
        report = {
            "sources": list(dataset.provenance.sources),
            "valid": len(dataset.traces),
            "rejected": len(dataset.provenance.rejections),
            "rejections": [r.to_dict() for r in dataset.provenance.rejections],
        }
        _write_json(Path(report_path), report)
    for rejection in dataset.provenance.rejections:
        click.echo(f"rejected {rejection.source}:{rejection.line_number}: {rejection.reason}", err=True)
    if not dataset.traces:
        raise click.ClickException("no valid traces in input")
    target = out / "dataset.jsonl"
    _write_text(target, serialize_dataset(dataset))
    click.echo(f"{len(dataset.traces)} valid traces, {len(dataset.provenance.rejections)} rejected -> {target}")


def _estimate_group_label(env: Environment, key: Tuple[str, ...]) -> str:
    parts = [env.value, *key]
    return "_".join(parts)


@main.command()
@click.option("--input", "inputs", multiple=True, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--group-by", "group_by", default="environment", show_default=True, help="Comma list from environment,sex,info,order; must include environment.")
@click.option("--order", "model_order", type=click.IntRange(1, 2), default=1, show_default=True, help="Also fit a second order model when 2.")
@click.option("--alpha", default="0", show_default=True, help="Additive smoothing constant (rational, e.g. 1/2).")
@click.pass_context
def estimate(ctx: click.Context, inputs: Sequence[str], group_by: str, model_order: int, alpha: str) -> None:
    """Fit chain models per group and write a report bundle."""
    config = ctx.obj["config"]
    out = _out_dir(ctx)
    fields = [f.strip() for f in group_by.split(",") if f.strip()]
    for field in fields:
        if field not in _GROUP_FIELDS:
            raise click.ClickException(f"unknown group field: {field}")
    if "environment" not in fields:
        raise click.ClickException("--group-by must include environment")
    extra = [f for f in fields if f != "environment"]
    try:
        alpha_value = Fraction(alpha)
    except (ValueError, ZeroDivisionError) as exc:
        raise click.ClickException(f"bad --alpha: {exc}")

    dataset = _read_dataset(inputs, config)
    groups = _split_dataset(dataset, extra) if extra else {(): list(dataset.traces)}

    files: Dict[str, str] = {}
    labels: List[str] = []
    for env in Environment:
        for key in sorted(groups):
            traces = groups[key]
            subset = Dataset(traces=tuple(traces), provenance=dataset.provenance)
            sequences = to_state_sequences(subset, env)
            if not sequences:
                continue
            label = _estimate_group_label(env, key)
            labels.append(label)
            chain = estimate_chain(sequences, label=label, alpha=alpha_value)
            _write_json(out / f"{label}.chain.json", chain_to_dict(chain))
            _write_text(out / f"{label}.percent.csv", chain_to_percent_csv(chain))
            _write_text(out / f"{label}.counts.csv", chain_to_count_csv(chain))
            try:
                marginals = propagate(chain)
                marginals_payload: Dict[str, object] = {
                    "scenes": [
                        {
                            "scene": dist.scene,
                            "probs": {s.wire: str(dist.probs[s.value]) for s in STATES},
                        }
                        for dist in marginals
                    ]
                }
            except UndefinedRowError as exc:
                marginals_payload = {"error": str(exc)}
            _write_json(out / f"{label}.marginals.json", marginals_payload)
            group_files = [
                f"{label}.chain.json",
                f"{label}.percent.csv",
                f"{label}.counts.csv",
                f"{label}.marginals.json",
            ]
            if model_order == 2:
                second = estimate_second_order(sequences, label=label, alpha=alpha_value)
                _write_json(out / f"{label}.order2.json", second_order_to_dict(second))
                group_files.append(f"{label}.order2.json")
            for name in group_files:
                files[name] = _sha256(out / name)
            click.echo(f"{label}: n={chain.n}")

    if not labels:
        raise click.ClickException("no group produced any state sequence")
    manifest = {
        "tool": {"name": "drivemc", "version": __version__},
        "inputs": {Path(p).name: _sha256(Path(p)) for p in inputs},
        "parameters": {
            "group_by": fields,
            "order": model_order,
            "alpha": str(alpha_value),
            "seed": ctx.obj["seed"],
        },
        "groups": labels,
        "files": files,
    }
    _write_json(out / "manifest.json", manifest)
    click.echo(f"wrote {len(files)} files + manifest.json -> {out}")


def _load_chain_file(path: Path) -> ChainModel:
    with path.open("r", encoding="utf-8") as handle:
        return chain_from_dict(json.load(handle))


def _dataset_chains(dataset: Dataset, label_prefix: str = "") -> Dict[Environment, ChainModel]:
    chains: Dict[Environment, ChainModel] = {}
    for env in Environment:
        sequences = to_state_sequences(dataset, env)
        if sequences:
            chains[env] = estimate_chain(sequences, label=f"{label_prefix}{env.value}")
    return chains


@main.command(name="test")
@click.option("--kind", type=click.Choice(["compare", "stationarity", "homogeneity", "order"]), required=True)
@click.option("--input", "inputs", multiple=True, required=True, type=click.Path(exists=True, dir_okay=False), help="Trace files (.jsonl) or chain model JSON files (.json).")
@click.option("--group-by", "group_by", default=None, help="Trace field that defines the groups (sex, info, order, environment).")
@click.pass_context
def run_tests(ctx: click.Context, kind: str, inputs: Sequence[str], group_by: Optional[str]) -> None:
    """Run one of the chi-square test families."""
    config = ctx.obj["config"]
    out = _out_dir(ctx)
    chain_inputs = [p for p in inputs if p.endswith(".json")]
    trace_inputs = [p for p in inputs if not p.endswith(".json")]
    if chain_inputs and trace_inputs:
        raise click.ClickException("mix of chain JSON and trace files; pass one kind")

    results: List[Dict[str, object]] = []

    def record(scope: str, result: TestResult) -> None:
        results.append({"scope": scope, **result.to_dict()})
        click.echo(f"{kind} [{scope}]")
        for line in _result_lines(result):
            click.echo(line)

    if chain_inputs:
        chains = [_load_chain_file(Path(p)) for p in chain_inputs]
        if kind == "compare":
            if len(chains) != 2:
                raise click.ClickException("compare needs exactly two chain files")
            record(
                f"{chains[0].label} vs {chains[1].label}",
                compare_groups(chains[0], chains[1], labels=(chains[0].label, chains[1].label)),
            )
        elif kind == "stationarity":
            for chain in chains:
                record(chain.label, test_stationarity(chain))
        elif kind == "homogeneity":
            if len(chains) < 2:
                raise click.ClickException("homogeneity needs at least two chain files")
            record(
                ",".join(c.label for c in chains),
                test_homogeneity([(c.label, c) for c in chains]),
            )
        else:
            raise click.ClickException("order test needs trace input, not chain files")
    else:
        dataset = _read_dataset(trace_inputs, config)
        if kind == "compare":
            if group_by in (None, "environment"):
                chains = _dataset_chains(dataset)
                if len(chains) != 2:
                    raise click.ClickException("need traces from both environments")
                envs = sorted(chains, key=lambda e: e.value)
                record(
                    f"{envs[0].value} vs {envs[1].value}",
                    compare_groups(chains[envs[0]], chains[envs[1]], labels=(envs[0].value, envs[1].value)),
                )
            else:
                groups = _split_dataset(dataset, [group_by])
                if len(groups) != 2:
                    raise click.ClickException(f"--group-by {group_by} produced {len(groups)} groups, need 2")
                (key_a, traces_a), (key_b, traces_b) = sorted(groups.items())
                for env in Environment:
                    seq_a = to_state_sequences(Dataset(tuple(traces_a), dataset.provenance), env)
                    seq_b = to_state_sequences(Dataset(tuple(traces_b), dataset.provenance), env)
                    if not seq_a or not seq_b:
                        continue
                    chain_a = estimate_chain(seq_a, label=f"{env.value}_{key_a[0]}")
                    chain_b = estimate_chain(seq_b, label=f"{env.value}_{key_b[0]}")
                    record(
                        f"{env.value}: {key_a[0]} vs {key_b[0]}",
                        compare_groups(chain_a, chain_b, labels=(key_a[0], key_b[0])),
                    )
        elif kind == "stationarity":
            for env, chain in _dataset_chains(dataset).items():
                record(env.value, test_stationarity(chain))
        elif kind == "homogeneity":
            if group_by is None:
                raise click.ClickException("homogeneity needs --group-by")
            groups = _split_dataset(dataset, [group_by])
            if len(groups) < 2:
                raise click.ClickException("homogeneity needs at least two groups")
            for env in Environment:
                subgroups = []
                for key in sorted(groups):
                    sequences = to_state_sequences(Dataset(tuple(groups[key]), dataset.provenance), env)
                    if sequences:
                        subgroups.append((key[0], estimate_chain(sequences, label=f"{env.value}_{key[0]}")))
                if len(subgroups) >= 2:
                    record(env.value, test_homogeneity(subgroups))
        else:  # order
            for env in Environment:
                sequences = to_state_sequences(dataset, env)
                if not sequences:
                    continue
                record(env.value, test_order([s.states for s in sequences]))

    if not results:
        raise click.ClickException("no testable group found")
    _write_json(out / f"test_{kind}.json", {"kind": kind, "results": results})


@main.command()
@click.option("--chain", "chain_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--n", "n", required=True, type=click.IntRange(min=1))
@click.option("--seed", "seed", type=int, default=None, help="Overrides the global --seed.")
@click.option("--out", "out_file", type=click.Path(dir_okay=False), default=None, help="Trajectory CSV path (defaults to trajectories.csv in the output directory).")
@click.pass_context
def simulate(ctx: click.Context, chain_path: str, n: int, seed: Optional[int], out_file: Optional[str]) -> None:
    """Sample trajectories from a chain model into a CSV file."""
    chain = _load_chain_file(Path(chain_path))
    use_seed = ctx.obj["seed"] if seed is None else seed
    states = sample_states(chain, n, use_seed)
    target = Path(out_file) if out_file else _out_dir(ctx) / "trajectories.csv"
    names = [s.wire for s in STATES]
    lines = ["idx,s1,s2,s3"]
    for idx in range(n):
        row = states[idx]
        lines.append(f"{idx},{names[row[0]]},{names[row[1]]},{names[row[2]]}")
    _write_text(target, "\n".join(lines) + "\n")
    click.echo(f"{n} trajectories (seed {use_seed}) -> {target}")


@main.command(name="export-prism")
@click.option("--chain", "chain_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--tolerance",
    type=float,
    default=5e-7,
    show_default=True,
    help="Self-check bound on |parsed - exact| marginals. The print-and-correct "
    "scheme can deviate up to 1.5e-6 per entry, so some valid chains need a "
    "looser bound than the half-ulp default.",
)
@click.pass_context
def export_prism(ctx: click.Context, chain_path: str, tolerance: float) -> None:
    """Write PRISM DTMC and PCTL property files for a chain model."""
    chain = _load_chain_file(Path(chain_path))
    out = _out_dir(ctx)
    dtmc = export_dtmc(chain)
    report = self_check(dtmc, chain, tolerance=tolerance)
    if not report.ok:
        details = "; ".join(report.mismatches[:3])
        raise click.ClickException(
            f"self check failed at tolerance {tolerance:g}: {details}"
        )
    properties = export_properties(chain)
    model_path = out / f"{chain.label}.pm"
    props_path = out / f"{chain.label}.pctl"
    _write_text(model_path, dtmc)
    _write_text(props_path, properties)
    eventually = evaluate_property(chain, "P=? [ F (step=3 & s=0) ]")
    click.echo(f"wrote {model_path} and {props_path}")
    click.echo(f"self check max deviation: {report.max_error:.2e}")
    click.echo(f"P=? [ F (step=3 & s=0) ] = {float(eventually):.6f} ({eventually})")


@main.command(name="recover-counts")
@click.option("--table", "table_path", type=click.Path(exists=True, dir_okay=False), default=None, help="JSON file with percent rows and row totals.")
@click.option("--reference", "use_reference", is_flag=True, help="Recover the bundled study tables instead.")
@click.option("--mode", type=click.Choice(["strict", "nearest"]), default="strict", show_default=True)
@click.pass_context
def recover_counts_cmd(ctx: click.Context, table_path: Optional[str], use_reference: bool, mode: str) -> None:
    """Recover integer counts from rounded percentage tables."""
    out = _out_dir(ctx)
    if use_reference == (table_path is not None):
        raise click.ClickException("pass exactly one of --table or --reference")
    if use_reference:
        payload = {}
        for env in Environment:
            counts = fixture_counts(env)
            payload[env.value] = {
                "start": list(counts[0].rows[0]),
                "steps": [[list(row) for row in m.rows] for m in counts[1:]],
            }
            click.echo(f"{env.value}: start {list(counts[0].rows[0])}")
        _write_json(out / "recovered_counts.json", payload)
        click.echo(f"wrote {out / 'recovered_counts.json'}")
        return
    with open(table_path, "r", encoding="utf-8") as handle:
        table = json.load(handle)
    try:
        rows = [tuple(str(cell) for cell in row) for row in table["rows"]]
        totals = [int(t) for t in table["row_totals"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise click.ClickException(f"bad table file: {exc}")
    try:
        recovered = recover_counts(rows, totals, mode=mode)
    except DrivemcError as exc:
        raise click.ClickException(str(exc))
    payload = {
        "mode": recovered.mode,
        "rows": [
            {
                "counts": list(report.counts),
                "exact": report.exact,
                "deviations_tenths": list(report.deviations_tenths),
            }
            for report in recovered.reports
        ],
    }
    _write_json(out / "recovered_counts.json", payload)
    for report in recovered.reports:
        click.echo(f"{list(report.counts)} exact={report.exact}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--sessions", "sessions_path", type=click.Path(dir_okay=False), default=None, help="Session log file (defaults to sessions.jsonl in the output directory).")
@click.option("--static", "static_dir", type=click.Path(file_okay=False), default=None, help="Directory with the built scenario runner UI.")
@click.pass_context
def serve(ctx: click.Context, host: str, port: int, sessions_path: Optional[str], static_dir: Optional[str]) -> None:
    """Serve the scenario runner and collect submitted sessions."""
    import uvicorn

    from .server import build_app

    out = _out_dir(ctx)
    sessions = Path(sessions_path) if sessions_path else out / "sessions.jsonl"
    static = Path(static_dir) if static_dir else None
    if static is None:
        candidate = Path("frontend") / "dist"
        if candidate.is_dir():
            static = candidate
    app = build_app(config=ctx.obj["config"], sessions_path=sessions, static_dir=static)
    click.echo(f"sessions -> {sessions}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
