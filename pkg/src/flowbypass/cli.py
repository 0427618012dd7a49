"""Command-line entry point: ``flowbypass {edit,sweep,oracle-check,field-info}``.

Run documents are JSON, validated against ``schema.json`` before anything
runs. ``--set a.b=value`` overrides a dotted path (the value is parsed as
JSON, falling back to a plain string) and ``--seed`` overrides
``edit.seed``. The effective document is echoed into every output: as a
``config`` key in JSON files and as a leading ``# config=...`` comment line
in CSV files.

Exit status: 0 success, 2 usage, 3 unreadable config file, 4 schema or
configuration error, 5 unknown condition or bad field input, 6 numerical
failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from flowbypass.bypass import (
    analytic_form_quadrature,
    compute_bypass,
    coupled_exact_oracle,
    dense_linear_oracle,
)
from flowbypass.editor import EditConfig, SweepSpec, edit, run_sweep, sample_dataset
from flowbypass.errors import ConfigError, EditError, FieldError, NumericalError
from flowbypass.field import ConditionedFieldSpec, GaussianMixture, labeled
from flowbypass.timegrid import make_time_grid
from flowbypass.trajectory import invert

EXIT_OK, EXIT_USAGE, EXIT_FILE, EXIT_CONFIG, EXIT_FIELD, EXIT_NUMERIC = 0, 2, 3, 4, 5, 6

DEFAULT_COUNT = 50
DEFAULT_ORACLE = {"n_values": [25, 50, 100, 200], "bypass_fraction": 0.6,
                  "substeps_factor": 20, "quadrature_nodes": 64}


class ConfigFileError(OSError):
    """The config file is missing or is not JSON."""


def _fmt(x) -> str:
    return "%.17g" % x


def load_schema() -> dict:
    return json.loads(resources.files("flowbypass").joinpath("schema.json").read_text())


def read_document(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigFileError(f"cannot read config file {str(path)!r}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigFileError(f"config file {str(path)!r} is not valid JSON: {exc}") from None


def apply_override(doc: dict, assignment: str) -> None:
    """Apply one ``dotted.key=value`` override in place."""
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"override must look like key=value, got {assignment!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.split(".")
    node = doc
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        if not isinstance(child, dict):
            raise ConfigError(f"override {key!r}: {part!r} is not a section")
        node = child
    node[parts[-1]] = value


def validate_document(doc: dict) -> None:
    try:
        jsonschema.validate(doc, load_schema())
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema violation at {where}: {exc.message}") from None


def effective_document(path, overrides=(), seed=None) -> dict:
    """Read, override and validate a run document."""
    doc = read_document(path)
    if not isinstance(doc, dict):
        raise ConfigError("schema violation at <root>: document must be a JSON object")
    doc = copy.deepcopy(doc)
    for assignment in overrides:
        apply_override(doc, assignment)
    if seed is not None:
        doc.setdefault("edit", {})["seed"] = seed
    doc.setdefault("prng", "philox")
    validate_document(doc)
    return doc


def _mixture(spec: dict) -> GaussianMixture:
    return GaussianMixture.from_components(
        (c["weight"], c["mean"], c["std"]) for c in spec["components"])


def build_field(doc: dict) -> ConditionedFieldSpec:
    fdoc = doc["field"]
    mixtures = {label: _mixture(m) for label, m in fdoc["conditions"].items()}
    null = _mixture(fdoc["null"]) if "null" in fdoc else None
    for label, mix in mixtures.items():
        if mix.dim != fdoc["dim"]:
            raise ConfigError(f"condition {label!r} has dimension {mix.dim}, field.dim is {fdoc['dim']}")
    return ConditionedFieldSpec(fdoc["dim"], mixtures, null)


def build_config(doc: dict) -> EditConfig:
    return EditConfig(**doc.get("edit", {}))


def build_dataset(doc: dict, field: ConditionedFieldSpec, config: EditConfig):
    ddoc = doc.get("dataset")
    if ddoc is None:
        raise ConfigError("this command needs a 'dataset' section")
    origin, target = labeled(ddoc["origin"]), labeled(ddoc["target"])
    field.check_condition(origin)
    field.check_condition(target)
    if "points" in ddoc:
        pts = np.asarray(ddoc["points"], dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != field.dim:
            raise ConfigError(f"dataset.points must be a list of {field.dim}-vectors")
        return [(p, origin, target) for p in pts]
    return sample_dataset(field, origin, target, ddoc.get("count", DEFAULT_COUNT), config.seed)


def _config_line(doc: dict) -> str:
    return "# config=" + json.dumps(doc, sort_keys=True, separators=(",", ":"))


def write_csv(path: Path, doc: dict, header, rows) -> None:
    buf = io.StringIO()
    buf.write(_config_line(doc) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) if isinstance(v, float) else v for v in row])
    path.write_text(buf.getvalue())


def write_json(path: Path, doc: dict, payload: dict) -> None:
    body = {"config": doc, **payload}
    path.write_text(json.dumps(body, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _path_rows(steps, times, states):
    return [[int(s), float(t), *map(float, z)] for s, t, z in zip(steps, times, states)]


def _state_header(d):
    return ["step", "t", *[f"z{j}" for j in range(d)]]


def _out_dir(args, doc) -> Path:
    out = Path(args.out or doc.get("output", {}).get("dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# Commands


def cmd_field_info(args, doc) -> int:
    field = build_field(doc)
    print(f"dim: {field.dim}")
    tables = [(f"condition {label}", mix) for label, mix in field.labeled_mixtures.items()]
    null_name = "null (pooled)" if field.null_is_default else "null"
    tables.append((null_name, field.null_mixture))
    for name, mix in tables:
        print(f"{name}: {mix.n_components} components")
        print("  k  weight               std                  mean")
        for k, (w, m, s) in enumerate(zip(mix.weights, mix.means, mix.stds)):
            print(f"  {k:<2} {_fmt(w):<20} {_fmt(s):<20} [{', '.join(_fmt(v) for v in m)}]")
    return EXIT_OK


def cmd_edit(args, doc) -> int:
    field = build_field(doc)
    config = build_config(doc)
    x0, origin, target = build_dataset(doc, field, config)[0]
    result = edit(field, x0, origin, target, config)
    out = _out_dir(args, doc)
    write_json(out / "result.json", doc, {"result": result.to_dict()})
    grid = result.inversion.grid
    d = field.dim
    write_csv(out / "trajectory.csv", doc, _state_header(d),
              _path_rows(range(grid.n_steps + 1), grid.times, result.inversion.states))
    b = config.bypass_index
    write_csv(out / "reconstruction.csv", doc, _state_header(d),
              _path_rows(range(b, -1, -1), grid.times[b::-1], result.reconstruction_path))
    m = result.metrics
    print(f"fidelity={_fmt(m.fidelity)} alignment={_fmt(m.alignment)} -> {out}")
    return EXIT_OK


def cmd_sweep(args, doc) -> int:
    if "sweep" not in doc:
        raise ConfigError("sweep needs a 'sweep' section")
    field = build_field(doc)
    config = build_config(doc)
    dataset = build_dataset(doc, field, config)
    spec = SweepSpec(doc["sweep"]["axis"], doc["sweep"]["values"], config)
    report = run_sweep(field, dataset, spec, jobs=args.jobs)
    out = _out_dir(args, doc)
    write_json(out / "sweep.json", doc, {"report": report.to_dict()})
    rows = [[json.dumps(m["setting"]), m["n_ok"], m["n_failed"],
             m["mean_fidelity"] if m["mean_fidelity"] is not None else "",
             m["mean_alignment"] if m["mean_alignment"] is not None else ""]
            for m in report.means]
    write_csv(out / "sweep.csv", doc,
              [spec.axis, "n_ok", "n_failed", "mean_fidelity", "mean_alignment"], rows)
    print(f"{len(report.settings)} settings x {len(dataset)} points -> {out}")
    return EXIT_OK


def oracle_rows(field, x0, config: EditConfig, origin, target, odoc: dict):
    """One comparison row per grid size in ``odoc['n_values']``."""
    g_inv, g_rec = config.guidances(origin, target)
    d = field.dim
    rows = []
    for n in odoc["n_values"]:
        grid = make_time_grid(n, config.shift)
        b_idx = int(round(odoc["bypass_fraction"] * n))
        t_b = float(grid[b_idx])
        record = invert(field, x0, grid, g_inv, g_rec, config.zeta, config.derivative_mode)
        discrete = compute_bypass(record, b_idx).b_star
        substeps = odoc["substeps_factor"] * n
        linear = dense_linear_oracle(field, x0, g_inv, g_rec, t_b, substeps,
                                     config.derivative_mode, config.zeta)
        exact = coupled_exact_oracle(field, x0, g_inv, g_rec, t_b, substeps)
        quad = analytic_form_quadrature(field, x0, g_inv, g_rec, t_b,
                                        odoc["quadrature_nodes"], odoc["quadrature_nodes"],
                                        config.derivative_mode, config.zeta)
        norm = np.linalg.norm
        rows.append([n, b_idx, t_b, *map(float, discrete), *map(float, linear),
                     *map(float, exact), *map(float, quad),
                     float(norm(discrete - linear)), float(norm(exact - linear)),
                     float(norm(quad - linear))])
    header = ["N", "B", "t_B"]
    for name in ("discrete", "linear_oracle", "exact_oracle", "quadrature"):
        header += [f"{name}_{j}" for j in range(d)]
    header += ["err_discrete_vs_linear", "err_exact_vs_linear", "err_quadrature_vs_linear"]
    return header, rows


def cmd_oracle_check(args, doc) -> int:
    field = build_field(doc)
    config = build_config(doc)
    x0, origin, target = build_dataset(doc, field, config)[0]
    odoc = {**DEFAULT_ORACLE, **doc.get("oracle", {})}
    header, rows = oracle_rows(field, x0, config, origin, target, odoc)
    out = _out_dir(args, doc)
    write_csv(out / "oracle.csv", doc, header, rows)
    for row in rows:
        print(f"N={row[0]} t_B={_fmt(row[2])} |discrete-linear|={_fmt(row[-3])}")
    return EXIT_OK


COMMANDS = {
    "edit": cmd_edit,
    "sweep": cmd_sweep,
    "oracle-check": cmd_oracle_check,
    "field-info": cmd_field_info,
}


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowbypass", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run document")
    parser.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    parser.add_argument("--jobs", type=_positive_int, default=1, help="worker processes for sweeps")
    parser.add_argument("--seed", type=_seed, default=None, help="overrides edit.seed")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a dotted document key")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = effective_document(args.config, args.overrides, args.seed)
        return COMMANDS[args.command](args, doc)
    except ConfigFileError as exc:
        print(f"flowbypass: file error: {exc}", file=sys.stderr)
        return EXIT_FILE
    except ConfigError as exc:
        print(f"flowbypass: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FieldError as exc:
        print(f"flowbypass: field error: {exc}", file=sys.stderr)
        return EXIT_FIELD
    except EditError as exc:
        step = getattr(exc.cause, "step", None)
        where = f" at step {step}" if step is not None else ""
        print(f"flowbypass: numerical error in {exc.stage}{where}: {exc.cause}", file=sys.stderr)
        return EXIT_NUMERIC
    except (NumericalError, FloatingPointError) as exc:
        print(f"flowbypass: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
