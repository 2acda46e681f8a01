"""Command-line entry point: ``erx {recover,rpca,check,classify}``.

Exit codes: 0 success (solver converged), 2 a solve hit ``--max-iter``,
1 runtime error, 64 usage error. Every output directory gets a
``manifest.json``; all files are written atomically.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import subprocess
import sys
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from . import checks
from .dstv import RecoveryConfig, recover_full, simulate_measurements, vtv_pair_equivalence
from .frpca import MODES, rpca_cell
from .images import ImagePlane, psnr, synthetic_image
from .layered import Classification, parse_norm, validate_assumptions
from .pnm import PnmParseError, atomic_write_bytes, encode_pnm, load_ppm

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MAX_ITER = 2
EXIT_USAGE = 64

log = logging.getLogger("erx")

REG_NAMES = {"vtv": "VTV", "vtv-direct": "VTVwoERx", "dvtv": "DVTV", "dstv": "DSTV"}
MODE_NAMES = {"signal": "signal_domain", "freq": "frequency_domain"}
SWEEP_SHIFTS = (0, 1, 2)
SWEEP_PS = (0.025, 0.05, 0.1)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# Output plumbing
# ---------------------------------------------------------------------------


def _version() -> str:
    try:
        ver = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        ver = "0+unknown"
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if rev.returncode == 0 and rev.stdout.strip():
            ver += f"+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return ver


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


class _Outputs:
    """Atomic writer for one ``--out-prefix`` plus its directory manifest."""

    def __init__(self, prefix: str, command: str, args: argparse.Namespace):
        self.prefix = Path(prefix)
        self.dir = self.prefix.parent
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.manifest = {
            "command": command,
            "args": {k: v for k, v in vars(args).items() if k != "func"},
            "seed": getattr(args, "seed", None),
            "version": _version(),
            "start": _now(),
        }

    def path(self, suffix: str) -> Path:
        return self.dir / f"{self.prefix.name}{suffix}"

    def write(self, suffix: str, data: bytes | str) -> Path:
        p = self.path(suffix)
        atomic_write_bytes(p, data.encode() if isinstance(data, str) else data)
        self.files.append(p.name)
        return p

    def close(self, **extra) -> None:
        self.manifest.update(extra, end=_now(), files=self.files)
        text = json.dumps(self.manifest, indent=2, sort_keys=True, default=str) + "\n"
        atomic_write_bytes(self.dir / "manifest.json", text.encode())


# ---------------------------------------------------------------------------
# recover
# ---------------------------------------------------------------------------


def _load_image(args) -> ImagePlane:
    if args.synthetic:
        return synthetic_image(args.image_seed, args.size, args.synthetic)
    if args.input is None:
        raise UsageError("recover: give an input PPM or --synthetic")
    path = Path(args.input)
    if not path.is_file():
        raise UsageError(f"recover: input file {path} does not exist")
    img = load_ppm(path)
    if img.channels != 3:
        raise ValueError("recover needs a color (P6) image")
    return img


def cmd_recover(args) -> int:
    img = _load_image(args)
    h, w = img.height, img.width
    y, phi, eps_fid = simulate_measurements(img, args.sampling, args.sigma, args.seed)
    out = _Outputs(args.out_prefix, "recover", args)
    base = dict(w=args.w, patch=args.patch, eps_fid=eps_fid, eps_stop=args.eps_stop, max_iter=args.max_iter)

    if args.reg == "vtv-pair":
        cfg = RecoveryConfig("VTV", **base)
        with_erx, without, _ = vtv_pair_equivalence(y, phi, cfg, h, w)
        n = max(len(with_erx), len(without))
        rows = [
            [i + 1, repr(float(with_erx[i])) if i < len(with_erx) else "", repr(float(without[i])) if i < len(without) else ""]
            for i in range(n)
        ]
        out.write("_vtv_pair.csv", _csv_text(["iter", "dist_with_erx", "dist_without_erx"], rows))
        print(f"vtv-pair: {len(with_erx)} / {len(without)} iterations, final distance {with_erx[-1]:.3e} / {without[-1]:.3e}")
        done = len(with_erx) < args.max_iter and len(without) < args.max_iter
        out.close(status="converged" if done else "max_iter")
        return EXIT_OK if done else EXIT_MAX_ITER

    cfg = RecoveryConfig(REG_NAMES[args.reg], **base)
    res = recover_full(y, phi, cfg, h, w, objective_every=args.objective_every)
    value = psnr(res.image, img)
    out.write("_recovered.ppm", encode_pnm(res.image))
    out.write("_trace.csv", res.trace.to_csv())
    out.write(
        "_psnr.csv",
        _csv_text(
            ["regularizer", "psnr_db", "iterations", "status", "eps_fid"],
            [[cfg.regularizer, f"{value:.4f}", res.trace.iterations, res.trace.status, repr(eps_fid)]],
        ),
    )
    out.close(status=res.trace.status, psnr_db=value, iterations=res.trace.iterations)
    print(f"{cfg.regularizer}: PSNR {value:.2f} dB after {res.trace.iterations} iterations ({res.trace.status})")
    return EXIT_OK if res.trace.converged else EXIT_MAX_ITER


# ---------------------------------------------------------------------------
# rpca
# ---------------------------------------------------------------------------


def _gray(m: np.ndarray) -> ImagePlane:
    return ImagePlane(np.clip(m, 0.0, 1.0)[:, :, None])


def cmd_rpca(args) -> int:
    if not args.sweep and (args.shift is None or args.p is None):
        raise UsageError("rpca: --shift and --p are required without --sweep")
    out = _Outputs(args.out_prefix, "rpca", args)
    kw = dict(seed=args.seed, eps_stop=args.eps_stop, max_iter=args.max_iter)
    if args.sweep:
        rows, all_done = [], True
        for shift in SWEEP_SHIFTS:
            for p in SWEEP_PS:
                row = [shift, p]
                iters = []
                for mode in MODES:
                    value, _, _, trace, _, _ = rpca_cell(shift, p, mode, **kw)
                    row.append(f"{value:.4f}")
                    iters.append(trace.iterations)
                    all_done &= trace.converged
                rows.append(row + iters)
                log.info("shift %d p %.3f: signal %s dB, freq %s dB", shift, p, row[2], row[3])
        header = ["shift", "p", "psnr_signal_db", "psnr_freq_db", "iters_signal", "iters_freq"]
        out.write("_sweep.csv", _csv_text(header, rows))
        print(_csv_text(header, rows), end="")
        out.close(status="converged" if all_done else "max_iter")
        return EXIT_OK if all_done else EXIT_MAX_ITER

    mode = MODE_NAMES[args.mode]
    value, l_mat, s_mat, trace, _, _ = rpca_cell(args.shift, args.p, mode, **kw)
    out.write("_L.pgm", encode_pnm(_gray(l_mat)))
    out.write("_S.pgm", encode_pnm(_gray(s_mat)))
    out.write(
        "_psnr.csv",
        _csv_text(
            ["shift", "p", "mode", "psnr_db", "iterations", "status"],
            [[args.shift, args.p, mode, f"{value:.4f}", trace.iterations, trace.status]],
        ),
    )
    out.close(status=trace.status, psnr_db=value, iterations=trace.iterations)
    print(f"{mode} shift={args.shift} p={args.p}: PSNR {value:.2f} dB ({trace.status})")
    return EXIT_OK if trace.converged else EXIT_MAX_ITER


# ---------------------------------------------------------------------------
# check / classify
# ---------------------------------------------------------------------------


def cmd_check(args) -> int:
    names = list(checks.SUITES) if args.suite == "all" else [args.suite]
    ok = True
    for name in names:
        r = checks.run_suite(name, seed=args.seed)
        print(r.line())
        for f in r.failures[:5]:
            print(f"    {f}")
        ok &= r.passed
    return EXIT_OK if ok else EXIT_ERROR


def cmd_classify(args) -> int:
    try:
        ln = parse_norm(args.norm, args.dim)
    except ValueError as exc:
        raise UsageError(f"classify: {exc}") from None
    v = validate_assumptions(ln)
    print(v.status.value)
    for r in v.reasons:
        print(f"  {r}")
    return EXIT_ERROR if v.status is Classification.INVALID else EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="erx", description="Layered-norm recovery experiments and property checks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    rec = sub.add_parser("recover", help="compressed-sensing color image recovery")
    rec.add_argument("input", nargs="?", help="binary PPM (P6) ground-truth image")
    rec.add_argument("--synthetic", choices=("piecewise", "constant"), help="use a generated image instead")
    rec.add_argument("--image-seed", type=int, default=0, help="seed of the synthetic image")
    rec.add_argument("--size", type=int, default=32, help="side of the synthetic image (power of two)")
    rec.add_argument("--reg", choices=(*REG_NAMES, "vtv-pair"), default="dstv")
    rec.add_argument("--w", type=float, default=0.5, help="luma weight")
    rec.add_argument("--patch", type=int, default=3, help="DSTV patch side (odd)")
    rec.add_argument("--sampling", type=_positive_float, default=0.2, help="measurement ratio m / 3N")
    rec.add_argument("--sigma", type=float, default=0.1, help="measurement noise standard deviation")
    rec.add_argument("--seed", type=int, default=0, help="seed of the measurement operator and noise")
    rec.add_argument("--eps-stop", type=_positive_float, default=1e-7)
    rec.add_argument("--max-iter", type=int, default=50_000)
    rec.add_argument("--objective-every", type=int, default=10, help="log R(x) every k iterations (0: never)")
    rec.add_argument("--out-prefix", default="out/recover")
    rec.set_defaults(func=cmd_recover)

    rp = sub.add_parser("rpca", help="shifted-signal robust PCA experiment")
    rp.add_argument("--mode", choices=tuple(MODE_NAMES), default="freq")
    rp.add_argument("--shift", type=int)
    rp.add_argument("--p", type=float)
    rp.add_argument("--sweep", action="store_true", help="run the 3 x 3 shift x p grid in both modes")
    rp.add_argument("--seed", type=int, default=0)
    rp.add_argument("--eps-stop", type=_positive_float, default=1e-5)
    rp.add_argument("--max-iter", type=int, default=50_000)
    rp.add_argument("--out-prefix", default="out/rpca")
    rp.set_defaults(func=cmd_rpca)

    ck = sub.add_parser("check", help="run oracle and property suites")
    ck.add_argument("--suite", choices=("all", *checks.SUITES), default="all")
    ck.add_argument("--seed", type=int, default=0)
    ck.set_defaults(func=cmd_check)

    cl = sub.add_parser("classify", help="classify a layered norm, e.g. 'l2[6]>l1'")
    cl.add_argument("norm", help="layers innermost first, joined by '>'")
    cl.add_argument("--dim", type=int, required=True, help="input dimension")
    cl.set_defaults(func=cmd_classify)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s"
        )
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (PnmParseError, ValueError, RuntimeError, OSError) as exc:
        print(f"erx: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
