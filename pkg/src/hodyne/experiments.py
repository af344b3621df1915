"""Sweep drivers: train/evaluate grids of receivers and persist results.

Three sweeps are provided, one per figure of merit: target amplitude
(denoiser target level), LO scan range (image width), and message amplitude.
Every row is derived from the sweep seed plus its grid coordinates, so
re-running a sweep reproduces results byte for byte, and rows whose
artifacts already exist on disk are skipped.
"""

from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._io import atomic_write_text
from .homodyne import LoScan, generate_dataset, save_dataset, slice_scan
from .limits import db_to_linear, p_err_helstrom, p_err_homodyne
from .nn import load_network, save_network
from .receiver import CnnConfig, GnnConfig, evaluate, train_cnn, train_gnn

SWEEP_KINDS = ("target-amplitude", "scan-range", "message-amplitude")
VARIANTS = ("hd-cnn", "hd-gnn-cnn")

RESULT_FIELDS = (
    "coordinate",
    "variant",
    "p_network",
    "p_err",
    "p_relative",
    "p_relative_hd",
    "p_hel",
    "seed",
    "replicate",
)


def target_amplitude_grid() -> list[float]:
    """17 target levels, uniform in dB from -15 to 9.08."""
    return [float(v) for v in np.linspace(-15.0, 9.08, 17)]


def message_amplitude_grid() -> list[float]:
    """15 message levels, uniform in dB from -15.0 to -9.12."""
    return [float(v) for v in np.linspace(-15.0, -9.12, 15)]


def scan_range_widths() -> list[int]:
    """Image widths 30, 28, ..., 4: the full scan plus 13 sliced ranges."""
    return list(range(30, 3, -2))


@dataclass(frozen=True)
class SweepSpec:
    kind: str
    message_db: tuple[float, ...]
    target_db: tuple[float, ...] = (9.0,)
    widths: tuple[int, ...] = (30,)
    train_per_key: int = 200
    test_per_key: int = 90
    gnn_epochs: int = 150
    cnn_epochs: int = 10
    base_seed: int = 0
    replicates: int = 3

    def __post_init__(self):
        if self.kind not in SWEEP_KINDS:
            raise ValueError(f"sweep kind must be one of {SWEEP_KINDS}, got {self.kind!r}")
        if not self.message_db or not self.target_db:
            raise ValueError("message_db and target_db must be nonempty")
        for w in self.widths:
            if w % 2 != 0 or not 4 <= w <= 30:
                raise ValueError(f"widths must be even and in [4, 30], got {w}")
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        if self.train_per_key < 1 or self.test_per_key < 1:
            raise ValueError("per-key counts must be >= 1")


def default_spec(kind: str, **overrides) -> SweepSpec:
    """Paper-default grids per sweep kind; keyword overrides win."""
    if kind == "target-amplitude":
        base = dict(
            kind=kind,
            message_db=(-12.0, -10.5, -9.3),
            target_db=tuple(target_amplitude_grid()),
            widths=(30,),
        )
    elif kind == "scan-range":
        base = dict(
            kind=kind,
            message_db=(-10.5, -9.3),
            target_db=(9.0,),
            widths=tuple(scan_range_widths()),
        )
    elif kind == "message-amplitude":
        base = dict(
            kind=kind,
            message_db=tuple(message_amplitude_grid()),
            target_db=(9.0,),
            widths=(30,),
        )
    else:
        raise ValueError(f"sweep kind must be one of {SWEEP_KINDS}, got {kind!r}")
    base.update(overrides)
    return SweepSpec(**base)


@dataclass(frozen=True)
class ResultRow:
    coordinate: float
    variant: str
    p_network: float
    p_err: float
    p_relative: float
    p_relative_hd: float
    p_hel: float
    seed: int
    replicate: int
    message_db: float  # metadata, not part of the CSV schema

    def csv_values(self) -> list:
        return [getattr(self, f) for f in RESULT_FIELDS]


def derive_seed(base_seed: int, *tags) -> int:
    """Stable 64-bit seed from the sweep seed plus string/int coordinates."""
    key = tuple(
        zlib.crc32(t.encode()) if isinstance(t, str) else int(t) & 0xFFFFFFFF for t in tags
    )
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=key)
    return int(ss.generate_state(2, np.uint32).view(np.uint64)[0])


def _fmt_db(db: float) -> str:
    return f"{db:+.2f}"


class SweepRunner:
    """Executes sweep rows, caching datasets and models under ``run_dir``.

    With ``run_dir`` None everything stays in memory (no resumability).
    Classifiers are trained once per (target level, width, replicate) and
    shared by every message level and by both variants.
    """

    def __init__(self, spec: SweepSpec, run_dir: str | Path | None = None):
        self.spec = spec
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self._cnn_cache: dict = {}
        self._target_cache: dict = {}
        if self.run_dir is not None:
            (self.run_dir / "datasets").mkdir(parents=True, exist_ok=True)
            (self.run_dir / "models").mkdir(parents=True, exist_ok=True)
            (self.run_dir / "results").mkdir(parents=True, exist_ok=True)

    # -- dataset/model helpers -------------------------------------------

    def _dataset(self, tag: str, signal_db: float, per_key: int, width: int, role: str, seed: int):
        full = generate_dataset(signal_db, per_key, LoScan.for_width(width), seed, role=role)
        if self.run_dir is not None:
            path = self.run_dir / "datasets" / f"{tag}.qhd"
            if not path.exists():
                save_dataset(full, path)
        return full

    def _sliced_dataset(self, tag, signal_db, per_key, width, role, seed):
        # scan-range rows slice the full 900-point grid instead of resimulating
        full = generate_dataset(signal_db, per_key, LoScan.full(), seed, role=role)
        ds = slice_scan(full, width)
        if self.run_dir is not None:
            path = self.run_dir / "datasets" / f"{tag}.qhd"
            if not path.exists():
                save_dataset(ds, path)
        return ds

    def _train_or_load_gnn(self, tag: str, noisy, targets, cfg: GnnConfig):
        if self.run_dir is not None:
            path = self.run_dir / "models" / f"{tag}.qnn"
            if path.exists():
                return load_network(path)
        net, _ = train_gnn(noisy, targets, cfg)
        if self.run_dir is not None:
            save_network(net, path)
        return net

    def _train_or_load_cnn(self, tag: str, labeled, cfg: CnnConfig):
        if self.run_dir is not None:
            path = self.run_dir / "models" / f"{tag}.qnn"
            if path.exists():
                return load_network(path)
        net, _ = train_cnn(labeled, cfg)
        if self.run_dir is not None:
            save_network(net, path)
        return net

    def _row_path(self, tag: str) -> Path | None:
        return None if self.run_dir is None else self.run_dir / "results" / f"{tag}.json"

    # -- row execution ----------------------------------------------------

    def run_row(
        self,
        coordinate: float,
        target_db: float,
        message_db: float,
        width: int,
        replicate: int,
        sliced: bool,
    ) -> list[ResultRow]:
        """Train (or reload) the row's networks and evaluate both variants."""
        spec = self.spec
        tag = f"w{width}_t{_fmt_db(target_db)}_m{_fmt_db(message_db)}_r{replicate}"
        row_path = self._row_path(tag)
        if row_path is not None and row_path.exists():
            return [ResultRow(**d) for d in json.loads(row_path.read_text())]

        seed = lambda *tags: derive_seed(spec.base_seed, replicate, *tags)
        make = self._sliced_dataset if sliced else self._dataset

        target_key = (target_db, width, replicate)
        if target_key not in self._target_cache:
            self._target_cache[target_key] = make(
                f"target_w{width}_t{_fmt_db(target_db)}_r{replicate}",
                target_db,
                spec.train_per_key,
                width,
                "gnn-target",
                seed("target", _fmt_db(target_db)),
            )
        targets = self._target_cache[target_key]

        # width is deliberately absent from data seeds: scan-range rows slice
        # one shared full-grid simulation per (level, replicate)
        noisy = make(
            f"noisy_{tag}",
            message_db,
            spec.train_per_key,
            width,
            "gnn-input",
            seed("noisy", _fmt_db(message_db)),
        )
        test = make(
            f"test_{tag}",
            message_db,
            spec.test_per_key,
            width,
            "test",
            seed("test", _fmt_db(message_db)),
        )

        if target_key not in self._cnn_cache:
            cnn_cfg = CnnConfig(
                input_width=width,
                epochs=spec.cnn_epochs,
                seed=seed("cnn", _fmt_db(target_db), width),
            )
            self._cnn_cache[target_key] = self._train_or_load_cnn(
                f"cnn_w{width}_t{_fmt_db(target_db)}_r{replicate}",
                replace(targets, role="cnn-train"),
                cnn_cfg,
            )
        cnn = self._cnn_cache[target_key]

        gnn_cfg = GnnConfig(
            input_width=width,
            epochs=spec.gnn_epochs,
            seed=seed("gnn", _fmt_db(target_db), _fmt_db(message_db)),
        )
        gnn = self._train_or_load_gnn(f"gnn_{tag}", noisy, targets, gnn_cfg)

        rows = []
        for variant, denoiser in (("hd-cnn", None), ("hd-gnn-cnn", gnn)):
            rep = evaluate(test, cnn, denoiser)
            rows.append(
                ResultRow(
                    coordinate=coordinate,
                    variant=variant,
                    p_network=rep.p_network,
                    p_err=rep.p_err,
                    p_relative=rep.p_relative,
                    p_relative_hd=rep.p_relative_hd,
                    p_hel=rep.p_hel,
                    seed=spec.base_seed,
                    replicate=replicate,
                    message_db=message_db,
                )
            )
        if row_path is not None:
            atomic_write_text(row_path, json.dumps([r.__dict__ for r in rows], indent=1) + "\n")
        return rows

    def row_jobs(self) -> list[dict]:
        """All (coordinate, target, message, width, replicate) cells of the sweep."""
        spec = self.spec
        jobs = []
        for replicate in range(spec.replicates):
            if spec.kind == "target-amplitude":
                for target_db in spec.target_db:
                    for message_db in spec.message_db:
                        jobs.append(
                            dict(
                                coordinate=target_db,
                                target_db=target_db,
                                message_db=message_db,
                                width=spec.widths[0],
                                replicate=replicate,
                                sliced=False,
                            )
                        )
            elif spec.kind == "scan-range":
                for width in spec.widths:
                    for message_db in spec.message_db:
                        jobs.append(
                            dict(
                                coordinate=2.0 * width * width / 900.0,  # units of pi
                                target_db=spec.target_db[0],
                                message_db=message_db,
                                width=width,
                                replicate=replicate,
                                sliced=True,
                            )
                        )
            else:  # message-amplitude
                for message_db in spec.message_db:
                    jobs.append(
                        dict(
                            coordinate=message_db,
                            target_db=spec.target_db[0],
                            message_db=message_db,
                            width=spec.widths[0],
                            replicate=replicate,
                            sliced=False,
                        )
                    )
        return jobs

    def run(self, progress=None) -> list[ResultRow]:
        rows = []
        jobs = self.row_jobs()
        for i, job in enumerate(jobs):
            if progress is not None:
                progress(i, len(jobs), job)
            rows.extend(self.run_row(**job))
        return rows


def sweep_target_amplitude(spec: SweepSpec, run_dir=None, progress=None) -> list[ResultRow]:
    """Denoiser-target-level sweep at fixed message levels (one GNN per cell)."""
    if spec.kind != "target-amplitude":
        raise ValueError(f"spec kind {spec.kind!r} is not target-amplitude")
    return SweepRunner(spec, run_dir).run(progress)


def sweep_scan_range(spec: SweepSpec, run_dir=None, progress=None) -> list[ResultRow]:
    """LO-scan-range sweep: slices the full grid per width and retrains."""
    if spec.kind != "scan-range":
        raise ValueError(f"spec kind {spec.kind!r} is not scan-range")
    return SweepRunner(spec, run_dir).run(progress)


def sweep_message_amplitude(spec: SweepSpec, run_dir=None, progress=None) -> list[ResultRow]:
    """Message-level sweep: one GNN per level, one shared classifier."""
    if spec.kind != "message-amplitude":
        raise ValueError(f"spec kind {spec.kind!r} is not message-amplitude")
    return SweepRunner(spec, run_dir).run(progress)


def emit_results(rows: list[ResultRow], path: str | Path, plot_path=None) -> None:
    """Write rows as CSV (17 significant digits) and optionally a figure.

    Values round-trip bit-exactly through the CSV.  The optional plot shows
    relative error versus coordinate per variant, with the relative homodyne
    limit and the zero (Helstrom) baseline.
    """
    if not rows:
        raise ValueError("no result rows to emit")
    lines = [",".join(RESULT_FIELDS)]
    for row in rows:
        cells = []
        for v in row.csv_values():
            cells.append(f"{v:.17g}" if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")
    if plot_path is not None:
        from .plots import plot_sweep_rows

        plot_sweep_rows(rows, plot_path)


def read_results(path: str | Path) -> list[dict]:
    """Parse an emitted CSV back into row dicts (floats where applicable)."""
    lines = Path(path).read_text().strip().split("\n")
    header = lines[0].split(",")
    if header != list(RESULT_FIELDS):
        raise ValueError(f"{path}: unexpected header {header}")
    out = []
    for line in lines[1:]:
        cells = line.split(",")
        row = {}
        for name, cell in zip(header, cells):
            if name == "variant":
                row[name] = cell
            elif name in ("seed", "replicate"):
                row[name] = int(cell)
            else:
                row[name] = float(cell)
        out.append(row)
    return out


# ---------------------------------------------------------------------------
# config-driven runs

_CONFIG_KEYS = {
    "sweep": str,
    "message_db": list,
    "target_db": (int, float, list),
    "widths": list,
    "width": int,
    "train_per_key": int,
    "test_per_key": int,
    "gnn_epochs": int,
    "cnn_epochs": int,
    "base_seed": int,
    "replicates": int,
    "out_dir": str,
    "plot": bool,
}


class ConfigError(ValueError):
    """Config validation failure with itemized diagnostics."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid experiment config:\n" + "\n".join(f"  - {p}" for p in problems))
        self.problems = problems


def parse_config(raw: dict) -> tuple[SweepSpec, dict]:
    """Validate a config mapping and build the SweepSpec it describes."""
    problems = []
    for key in raw:
        if key not in _CONFIG_KEYS:
            problems.append(f"unknown key {key!r}")
    if "sweep" not in raw:
        problems.append("missing required key 'sweep'")
    elif raw["sweep"] not in SWEEP_KINDS:
        problems.append(f"'sweep' must be one of {SWEEP_KINDS}, got {raw['sweep']!r}")
    for key, types in _CONFIG_KEYS.items():
        if key in raw and not isinstance(raw[key], types):
            problems.append(f"{key!r} has wrong type {type(raw[key]).__name__}")
    if problems:
        raise ConfigError(problems)

    overrides = {}
    if "message_db" in raw:
        overrides["message_db"] = tuple(float(v) for v in raw["message_db"])
    if "target_db" in raw:
        t = raw["target_db"]
        overrides["target_db"] = tuple(float(v) for v in t) if isinstance(t, list) else (float(t),)
    if "widths" in raw:
        overrides["widths"] = tuple(int(w) for w in raw["widths"])
    if "width" in raw:
        overrides["widths"] = (int(raw["width"]),)
    for key in ("train_per_key", "test_per_key", "gnn_epochs", "cnn_epochs", "base_seed", "replicates"):
        if key in raw:
            overrides[key] = int(raw[key])
    try:
        spec = default_spec(raw["sweep"], **overrides)
    except ValueError as e:
        raise ConfigError([str(e)]) from e
    if spec.train_per_key != 200:
        raise ConfigError(["'train_per_key' must be 200 (the classifier splits 170/30 per key)"])
    options = {"out_dir": raw.get("out_dir", "runs"), "plot": bool(raw.get("plot", False))}
    return spec, options


def config_hash(raw: dict) -> str:
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def run_config(path: str | Path, progress=None, jobs: int = 1) -> Path:
    """Execute the sweep described by a JSON config file, end to end.

    Artifacts land under ``<out_dir>/<config-hash>-s<seed>/``: datasets,
    models, per-row results, the assembled CSV(s), and a config snapshot.
    Re-running skips every row whose artifacts already exist.
    """
    raw = json.loads(Path(path).read_text())
    return run_raw_config(raw, progress=progress, jobs=jobs)


def _group_key(job: dict) -> tuple:
    # rows sharing a classifier (same target level, width, replicate)
    return (job["target_db"], job["width"], job["replicate"])


def _run_group(spec: SweepSpec, run_dir: str, jobs: list[dict]) -> list[ResultRow]:
    runner = SweepRunner(spec, run_dir)
    rows = []
    for job in jobs:
        rows.extend(runner.run_row(**job))
    return rows


def run_raw_config(raw: dict, progress=None, jobs: int = 1) -> Path:
    """Like :func:`run_config` but takes the config mapping directly."""
    spec, options = parse_config(raw)
    run_dir = Path(options["out_dir"]) / f"{config_hash(raw)}-s{spec.base_seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    snapshot = run_dir / "config.snapshot"
    if not snapshot.exists():
        atomic_write_text(snapshot, json.dumps(raw, sort_keys=True, indent=2) + "\n")

    runner = SweepRunner(spec, run_dir)
    if jobs <= 1:
        rows = runner.run(progress)
    else:
        # one task per classifier group; artifacts shared through run_dir
        groups: dict[tuple, list[dict]] = {}
        order = []
        for job in runner.row_jobs():
            key = _group_key(job)
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(job)
        import concurrent.futures as cf
        import multiprocessing as mp

        ctx = mp.get_context("spawn")
        rows = []
        with cf.ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            futures = [pool.submit(_run_group, spec, str(run_dir), groups[k]) for k in order]
            for i, fut in enumerate(futures):
                if progress is not None:
                    progress(i, len(futures), {"group": order[i]})
                rows.extend(fut.result())

    # message-amplitude rows share one file (the level IS the coordinate);
    # the other sweeps get one CSV per message level so the 9-column schema
    # stays unambiguous
    if spec.kind == "message-amplitude" or len(spec.message_db) == 1:
        groups = {"results": rows}
    else:
        groups = {}
        for row in rows:
            groups.setdefault(f"results_m{_fmt_db(row.message_db)}", []).append(row)
    for name, group_rows in sorted(groups.items()):
        plot_path = run_dir / f"{name}.png" if options["plot"] else None
        emit_results(group_rows, run_dir / f"{name}.csv", plot_path)
    return run_dir
