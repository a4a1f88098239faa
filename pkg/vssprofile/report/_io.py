# vssprofile/report/_io.py
"""
Files written and read by the ``vss`` commands.

Numbers are written with 17 significant digits so that every double
round-trips. JSON documents carry ``schema_version`` and are dumped with
sorted keys, which together with the fixed sample grid makes repeated runs
byte-identical.
"""

from __future__ import annotations

import csv
import datetime
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field

from vssprofile._utils import full_precision
from vssprofile.asymptotics import CriticalReport, LambdaDiagnostic, TailFit
from vssprofile.classifier import SweepItem
from vssprofile.params import DerivedConstants, ExponentConfig
from vssprofile.shooter import IntegratorSettings, Profile, Termination
from vssprofile.variational import OperatorSamples, VariationalProfile

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

PROFILE_COLUMNS = ("r", "f", "fprime", "w", "wprime", "E")
SWEEP_COLUMNS = ("a", "label", "R", "R1", "r_cross", "w_at_horizon")
VARIATIONAL_COLUMNS = ("r", "fa", "fa_prime", "wa", "mono_gap", "La_wa", "La_rwprime")

PathLike = Union[str, Path]


def _jsonable(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps(data: Any) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n"


def write_json(path: PathLike, data: Dict[str, Any]) -> Path:
    path = Path(path)
    payload = {"schema_version": SCHEMA_VERSION, **data}
    path.write_text(dumps(payload), encoding="utf-8")
    logger.info("wrote %s", path)
    return path


def sha256_file(path: PathLike) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ─────────────────────────────────────────────────────────────
#  Profiles
# ─────────────────────────────────────────────────────────────


def profile_meta(
    profile: Profile, consts: DerivedConstants, settings: IntegratorSettings
) -> Dict[str, Any]:
    return {
        "a": profile.a,
        "termination": str(profile.termination),
        "R": profile.R,
        "R1": profile.R1,
        "r_cross": profile.r_cross,
        "r_end": profile.r_end,
        "r_switch": profile.r_switch,
        "steps": profile.steps,
        "settings": settings.model_dump(mode="json"),
        "derived_constants": consts.to_dict(),
    }


def write_profile(
    profile: Profile,
    out_dir: PathLike,
    consts: DerivedConstants,
    settings: IntegratorSettings,
    stem: str = "profile",
) -> List[Path]:
    """Write ``<stem>.csv`` and its sidecar ``meta.json``."""
    out_dir = Path(out_dir)
    csv_path = out_dir / f"{stem}.csv"
    np.savetxt(
        csv_path,
        profile.samples,
        fmt="%.17g",
        delimiter=",",
        header=",".join(PROFILE_COLUMNS),
        comments="",
    )
    logger.info("wrote %s (%d samples)", csv_path, len(profile.r))
    meta_path = write_json(out_dir / "meta.json", profile_meta(profile, consts, settings))
    return [csv_path, meta_path]


def _infer_termination(f: np.ndarray, w: np.ndarray, consts: DerivedConstants) -> Termination:
    if f[-1] == 0.0:
        return Termination.F_HIT_ZERO
    if w[-1] >= float(consts.w_star) * (1 + 1e-4):
        return Termination.W_CROSSED_PLATEAU
    return Termination.HORIZON_REACHED


def read_profile(path: PathLike, consts: DerivedConstants) -> Profile:
    """Load a profile CSV, taking termination data from ``meta.json`` beside it.

    Without the sidecar the termination is inferred from the last row.
    """
    path = Path(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(PROFILE_COLUMNS):
        raise ValueError(f"{path}: expected columns {','.join(PROFILE_COLUMNS)}")
    r, f, fprime = data[:, 0], data[:, 1], data[:, 2]
    meta_path = path.with_name("meta.json")
    meta: Dict[str, Any] = {}
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        termination = Termination(meta["termination"])
    else:
        termination = _infer_termination(f, data[:, 3], consts)
        logger.warning("%s has no meta.json beside it; assuming %s", path, termination)
    extra = {
        key: meta[key]
        for key in ("R", "R1", "r_cross", "r_end", "r_switch", "steps")
        if meta.get(key) is not None
    }
    return Profile.build(meta.get("a", f[0]), r, f, fprime, consts, termination, **extra)


def plot_profile(profile: Profile, consts: DerivedConstants, path: PathLike) -> Path:
    """Log-log SVG of f and w against r with the w* guide line."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    w_star = float(consts.w_star)
    keep = (profile.r > 0) & (profile.f > 0)
    with plt.rc_context({"svg.hashsalt": "vssprofile", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.8))
        ax.loglog(profile.r[keep], profile.f[keep], label="f")
        ax.loglog(profile.r[keep], profile.w[keep], label="w = r^mu f")
        ax.axhline(w_star, color="gray", linestyle="--", linewidth=1, label=f"w* = {w_star:.6g}")
        ax.set_xlabel("r")
        ax.set_title(f"a = {profile.a:.12g} ({profile.termination})")
        ax.legend(loc="best")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    logger.info("wrote %s", path)
    return path


# ─────────────────────────────────────────────────────────────
#  Tables
# ─────────────────────────────────────────────────────────────


def _cell(value: Optional[float]) -> str:
    return "" if value is None else full_precision(float(value))


def write_sweep(items: Sequence[SweepItem], path: PathLike) -> Path:
    """One row per swept a; failed runs get label ``Error`` and empty fields."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for item in items:
            if item.label is None:
                writer.writerow([_cell(item.a), "Error", "", "", "", ""])
                continue
            label = item.label
            writer.writerow(
                [
                    _cell(item.a),
                    str(label.kind),
                    _cell(label.R),
                    _cell(label.R1),
                    _cell(label.r_cross),
                    _cell(label.w_at_horizon),
                ]
            )
    logger.info("wrote %s (%d rows)", path, len(items))
    return path


def write_variational(vp: VariationalProfile, ops: OperatorSamples, path: PathLike) -> Path:
    """Interior samples of a variational run with the operator values.

    ``La_wa`` is normalized by its term magnitudes; ``La_rwprime`` is raw.
    """
    path = Path(path)
    inner = vp.base.interior()
    rows = np.column_stack(
        [
            ops.r,
            vp.fa[inner],
            vp.fa_prime[inner],
            vp.wa[inner],
            vp.mono_gap[inner],
            ops.la_wa_normalized,
            ops.la_rwprime,
        ]
    )
    np.savetxt(
        path, rows, fmt="%.17g", delimiter=",", header=",".join(VARIATIONAL_COLUMNS), comments=""
    )
    logger.info("wrote %s (%d samples)", path, len(rows))
    return path


def tails_document(
    fit: TailFit, lam: Optional[LambdaDiagnostic], critical: Optional[CriticalReport]
) -> Dict[str, Any]:
    return {
        "exponent": fit.exponent,
        "amplitude": fit.amplitude,
        "window": list(fit.window),
        "residual": fit.residual,
        "orbit": fit.orbit,
        "lambda": None
        if lam is None
        else {"limit": lam.limit_estimate, "rate": lam.rate_estimate},
        "critical": None
        if critical is None
        else {
            "max_rwprime": critical.max_rwprime,
            "slope_ratio_range": list(critical.slope_ratio_range),
        },
    }


# ─────────────────────────────────────────────────────────────
#  Manifest
# ─────────────────────────────────────────────────────────────


class OutputRecord(BaseModel):
    path: str
    sha256: str


class RunManifest(BaseModel):
    """What a command was asked to do and every file it produced."""

    schema_version: int = SCHEMA_VERSION
    config: ExponentConfig
    settings: IntegratorSettings
    command: List[str] = Field(..., description="Subcommand followed by its arguments")
    timestamp: str
    tool_version: str
    extended_precision: bool = False
    outputs: List[OutputRecord] = Field(default_factory=list)


def run_timestamp() -> str:
    """UTC time of the run; SOURCE_DATE_EPOCH pins it for reproducible output."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    moment = (
        datetime.datetime.fromtimestamp(int(epoch), tz=datetime.timezone.utc)
        if epoch
        else datetime.datetime.now(tz=datetime.timezone.utc)
    )
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


def _display_path(path: PathLike, out_dir: Path) -> str:
    path = Path(path)
    try:
        return path.relative_to(out_dir).as_posix()
    except ValueError:
        return path.as_posix()


def write_manifest(
    out_dir: PathLike,
    outputs: Sequence[PathLike],
    *,
    config: ExponentConfig,
    settings: IntegratorSettings,
    command: Sequence[str],
    tool_version: str,
    extended_precision: bool = False,
) -> Path:
    """Digest every output and write ``manifest.json``; call after all other writes."""
    out_dir = Path(out_dir)
    records = [OutputRecord(path=_display_path(p, out_dir), sha256=sha256_file(p)) for p in outputs]
    manifest = RunManifest(
        config=config,
        settings=settings,
        command=list(command),
        timestamp=run_timestamp(),
        tool_version=tool_version,
        extended_precision=extended_precision,
        outputs=records,
    )
    path = out_dir / "manifest.json"
    path.write_text(dumps(manifest.model_dump(mode="json")), encoding="utf-8")
    logger.info("wrote %s (%d outputs)", path, len(records))
    return path


def verify_manifest(path: PathLike) -> List[str]:
    """Paths whose current digest differs from the one recorded."""
    path = Path(path)
    manifest = RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
    return [
        record.path
        for record in manifest.outputs
        if sha256_file(path.parent / record.path) != record.sha256
    ]
