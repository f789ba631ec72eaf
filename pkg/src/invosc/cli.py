"""Command line driver: declarative configs in, CSV artifacts out.

Five subcommands cover the pipeline end to end:

  solve         integrate the transformation chain, assemble the field
  verify        run the interior-residual ladder and judge convergence
  oracle        propagate the radial reference and report fidelities
  scan          rank the eight exponent/branch readings by residual
  bessel-table  tabulate the radial pair for manual inspection

Config files use the small ``[section] / key = value`` format scanned by
params.parse_sections.  Physics inputs (coefficients, charge, coupling,
mode numbers, span, grid extents) must be explicit; only numerical knobs
(tolerances, ladder steps, sample counts) carry defaults.

Every artifact embeds a sha256 digest of the effective config so that
later comparisons can refuse mixed inputs, and ``verify`` does refuse
them.  Outputs are deterministic: fixed float format, fixed iteration
order, no timestamps.  One process owns an output directory at a time,
enforced with a ``.lock`` file.

Exit codes are a stable contract:

  0  pass            4  verification failed (residual/fidelity criteria)
  2  config/parse    5  inconclusive (scan winner under the 2x margin)
  3  solver error    6  unstable oracle propagation
                     7  ladder too short or non-converging to estimate order
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import os
import sys
from pathlib import Path

import numpy as np

from .bessel import bessel_j, bessel_n
from .errors import (ConfigError, GridTooCoarse, Inconclusive, InvoscError,
                     Unstable)
from .ode import (IntegratorConfig, MU_COUPLINGS, default_alpha0, solve_chain,
                  write_trajectory_csv)
from .oracle import RadialProblem, propagate
from .params import (CoefficientSet, parse_sections, time_function_from_section)
from .wavefunction import (CartesianGrid, ConventionFlags, ModeSpec,
                           PolarGrid, ScanOutcome, assemble_psi,
                           convention_scan, sample_field,
                           schrodinger_residual, sector_winding)

__all__ = ["main", "RunConfig", "EXIT_OK", "EXIT_PARSE", "EXIT_SOLVER",
           "EXIT_VERIFY", "EXIT_INCONCLUSIVE", "EXIT_UNSTABLE", "EXIT_LADDER"]

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_SOLVER = 3
EXIT_VERIFY = 4
EXIT_INCONCLUSIVE = 5
EXIT_UNSTABLE = 6
EXIT_LADDER = 7

OUT_DIR_ENV = "INVOSC_OUT"

_SECTIONS = {"mass", "frequency", "magnetic_field", "constants", "mode",
             "span", "grid", "verification", "oracle", "run"}
_REQUIRED_SECTIONS = ("mass", "frequency", "magnetic_field", "constants",
                      "mode", "span", "grid")


# -- typed section reads ------------------------------------------------------

class _Section:
    """Typed key lookups over one parsed section, errors carry line numbers."""

    def __init__(self, name, items, header_line):
        self.name = name
        self.items = items
        self.header_line = header_line

    _MISSING = object()

    def _raw(self, key, default):
        if key not in self.items:
            if default is self._MISSING:
                raise ConfigError(f"missing key {key!r} in [{self.name}]",
                                  self.header_line)
            return None
        return self.items[key]

    def _parse(self, key, default, kind, what):
        got = self._raw(key, default)
        if got is None:
            return default
        raw, line = got
        try:
            return kind(raw)
        except ValueError:
            raise ConfigError(f"{key} = {raw!r} is not {what}", line) from None

    def float(self, key, default=_MISSING):
        return self._parse(key, default, float, "a number")

    def int(self, key, default=_MISSING):
        return self._parse(key, default, int, "an integer")

    def complex(self, key, default=_MISSING):
        return self._parse(key, default,
                           lambda raw: complex(raw.replace(" ", "")),
                           "a complex number")

    def str(self, key, default=_MISSING):
        return self._parse(key, default, lambda raw: raw, "a string")

    def floats(self, key, default=_MISSING):
        def parse(raw):
            return tuple(float(tok) for tok in raw.replace(",", " ").split())
        return self._parse(key, default, parse, "a number list")

    def reject_unknown(self, known):
        for key, (_, line) in self.items.items():
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{self.name}]", line)


# -- run configuration --------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class VerifySettings:
    times: tuple
    dt_ladder: tuple
    max_rel_inf: float
    order_lo: float
    order_hi: float


@dataclasses.dataclass(frozen=True)
class OracleSettings:
    rho_max: float
    n_rho: int
    dt: float
    record_times: tuple
    min_fidelity: float


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Everything a command needs, read once from a config file.

    ``flags_raw`` is either a convention label or the word "scan";
    commands that need concrete conventions resolve it (or the --flags
    override) through resolve_flags.  verification and oracle sections
    are optional at parse time; the commands that need them say so.
    """

    path: str
    text: str
    digest: str
    coeffs: CoefficientSet
    span: tuple
    mode_k: float
    mode_n: int
    angular_sign: int
    amp_first: complex
    amp_second: complex
    flags_raw: str
    grid: object
    verify: VerifySettings | None
    oracle: OracleSettings | None
    field_times: tuple
    trajectory_samples: int
    mu_coupling: str
    chain_cfg: IntegratorConfig

    @classmethod
    def load(cls, path, flags_override=None):
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        digest_src = text
        if flags_override is not None:
            digest_src += f"\n# cli_flags_override = {flags_override}\n"
        digest = hashlib.sha256(digest_src.encode()).hexdigest()

        sections, headers = parse_sections(text)
        for name in sections:
            if name not in _SECTIONS:
                raise ConfigError(f"unknown section [{name}]", headers[name])
        for name in _REQUIRED_SECTIONS:
            if name not in sections:
                raise ConfigError(f"config has no [{name}] section")

        def sec(name):
            return _Section(name, sections[name], headers[name])

        span_s = sec("span")
        span_s.reject_unknown({"t0", "t1"})
        span = (span_s.float("t0"), span_s.float("t1"))
        if not span[0] < span[1]:
            raise ConfigError(f"span [{span[0]!r}, {span[1]!r}] is empty",
                              span_s.header_line)

        consts = sec("constants")
        consts.reject_unknown({"q", "C"})
        q = consts.float("q")
        coupling = consts.float("C")

        try:
            coeffs = CoefficientSet(
                mass=time_function_from_section(
                    "mass", sections["mass"], span, headers["mass"]),
                frequency=time_function_from_section(
                    "frequency", sections["frequency"], span,
                    headers["frequency"]),
                magnetic_field=time_function_from_section(
                    "magnetic_field", sections["magnetic_field"], span,
                    headers["magnetic_field"]),
                charge=q, coupling=coupling)
        except ValueError as exc:
            raise ConfigError(str(exc), headers["mass"]) from exc

        mode_s = sec("mode")
        mode_s.reject_unknown({"k", "n", "angular_sign", "amp_first",
                               "amp_second", "flags"})
        angular_sign = mode_s.int("angular_sign")
        if angular_sign not in (1, -1):
            raise ConfigError("angular_sign must be +1 or -1",
                              mode_s.items["angular_sign"][1])
        flags_raw = mode_s.str("flags")
        if flags_raw != "scan":
            ConventionFlags.from_label(flags_raw)   # validate early

        grid = cls._read_grid(sec("grid"))

        verify = None
        if "verification" in sections:
            ver_s = sec("verification")
            ver_s.reject_unknown({"times", "dt_ladder", "max_rel_inf",
                                  "order_lo", "order_hi"})
            verify = VerifySettings(
                times=ver_s.floats("times"),
                dt_ladder=ver_s.floats("dt_ladder",
                                       default=(8e-3, 4e-3, 2e-3)),
                max_rel_inf=ver_s.float("max_rel_inf"),
                order_lo=ver_s.float("order_lo", default=1.7),
                order_hi=ver_s.float("order_hi", default=2.3))

        oracle = None
        if "oracle" in sections:
            orc_s = sec("oracle")
            orc_s.reject_unknown({"rho_max", "n_rho", "dt", "record_times",
                                  "min_fidelity"})
            oracle = OracleSettings(
                rho_max=orc_s.float("rho_max"),
                n_rho=orc_s.int("n_rho"),
                dt=orc_s.float("dt"),
                record_times=orc_s.floats("record_times"),
                min_fidelity=orc_s.float("min_fidelity"))

        field_times = (span[0], span[1])
        samples = 512
        mu_coupling = "pde"
        chain_cfg = IntegratorConfig()
        if "run" in sections:
            run_s = sec("run")
            run_s.reject_unknown({"field_times", "trajectory_samples",
                                  "mu_coupling", "rel_tol", "abs_tol"})
            field_times = run_s.floats("field_times", default=field_times)
            samples = run_s.int("trajectory_samples", default=samples)
            mu_coupling = run_s.str("mu_coupling", default=mu_coupling)
            if mu_coupling not in MU_COUPLINGS:
                raise ConfigError(
                    f"mu_coupling must be one of {MU_COUPLINGS}",
                    run_s.items["mu_coupling"][1])
            chain_cfg = IntegratorConfig(
                rel_tol=run_s.float("rel_tol", default=chain_cfg.rel_tol),
                abs_tol=run_s.float("abs_tol", default=chain_cfg.abs_tol))

        return cls(path=str(path), text=text, digest=digest, coeffs=coeffs,
                   span=span, mode_k=mode_s.float("k"), mode_n=mode_s.int("n"),
                   angular_sign=angular_sign,
                   amp_first=mode_s.complex("amp_first"),
                   amp_second=mode_s.complex("amp_second", default=0j),
                   flags_raw=flags_raw, grid=grid, verify=verify,
                   oracle=oracle, field_times=field_times,
                   trajectory_samples=samples, mu_coupling=mu_coupling,
                   chain_cfg=chain_cfg)

    @staticmethod
    def _read_grid(grid_s):
        kind = grid_s.str("type")
        if kind == "polar":
            grid_s.reject_unknown({"type", "rho_min", "rho_max", "n_rho",
                                   "n_phi"})
            try:
                return PolarGrid(rho_min=grid_s.float("rho_min"),
                                 rho_max=grid_s.float("rho_max"),
                                 n_rho=grid_s.int("n_rho"),
                                 n_phi=grid_s.int("n_phi"))
            except ValueError as exc:
                raise ConfigError(str(exc), grid_s.header_line) from exc
        if kind == "cartesian":
            grid_s.reject_unknown({"type", "half_width", "n", "rho_min"})
            try:
                return CartesianGrid.centered(
                    half_width=grid_s.float("half_width"),
                    n=grid_s.int("n"),
                    rho_min=grid_s.float("rho_min", default=0.0))
            except ValueError as exc:
                raise ConfigError(str(exc), grid_s.header_line) from exc
        raise ConfigError(f"grid type must be polar or cartesian, got {kind!r}",
                          grid_s.items["type"][1])

    def mode(self, flags):
        return ModeSpec.from_coupling(
            k=self.mode_k, n=self.mode_n, C=self.coeffs.coupling,
            amp_first=self.amp_first, amp_second=self.amp_second,
            angular_sign=self.angular_sign, conventions=flags)

    def chain(self, branch):
        alpha0 = default_alpha0(self.coeffs, self.span[0], branch=branch)
        return solve_chain(self.coeffs, self.mode_k, span=self.span,
                           alpha0=alpha0, cfg=self.chain_cfg,
                           mu_coupling=self.mu_coupling)


# -- shared plumbing ----------------------------------------------------------

def _resolve_out(args):
    out = args.out or os.environ.get(OUT_DIR_ENV) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


class _OutputLock:
    """Exclusive ``.lock`` in the output directory, crash leaves it behind."""

    def __init__(self, out_dir):
        self.lock_path = Path(out_dir) / ".lock"

    def __enter__(self):
        try:
            fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise InvoscError(
                f"output directory is locked by {self.lock_path}; remove the "
                "file if no other run is active") from None
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        return self

    def __exit__(self, *exc_info):
        self.lock_path.unlink(missing_ok=True)
        return False


def _embedded_digest(path):
    with open(path) as fh:
        for _ in range(4):
            line = fh.readline()
            if line.startswith("# config_digest: "):
                return line.split(": ", 1)[1].strip()
    return None


def _refuse_digest_clash(out_dir, digest):
    for prior in sorted(Path(out_dir).glob("*.csv")):
        old = _embedded_digest(prior)
        if old is not None and old != digest:
            raise ConfigError(
                f"{prior.name} in the output directory was written from a "
                f"different config (digest {old[:12]} vs {digest[:12]}); "
                "point --out somewhere fresh or remove the stale artifacts")


def _say(args, text):
    if not args.quiet:
        print(text)


def _resolve_flags(cfg, args):
    """Concrete ConventionFlags plus a provenance note, or ("scan", note)."""
    raw = getattr(args, "flags", None) or cfg.flags_raw
    source = "cli" if getattr(args, "flags", None) else "config"
    if raw == "scan":
        return "scan", source
    return ConventionFlags.from_label(raw), source


def _run_scan(cfg):
    if cfg.verify is None:
        raise ConfigError("scan needs a [verification] section for the "
                          "residual times and step")
    template = cfg.mode(ConventionFlags())
    return convention_scan(template, cfg.chain, cfg.coeffs, cfg.grid,
                           times=cfg.verify.times,
                           step=cfg.verify.dt_ladder[0])


def _write_summary(path, digest, pairs):
    lines = [f"# config_digest: {digest}"]
    lines += [f"{key} = {value}" for key, value in pairs]
    Path(path).write_text("\n".join(lines) + "\n")


# -- commands -----------------------------------------------------------------

def cmd_solve(args):
    cfg = RunConfig.load(args.config, flags_override=args.flags)
    out = _resolve_out(args)
    flags, source = _resolve_flags(cfg, args)
    with _OutputLock(out):
        artifacts = ["trajectory.csv", "field.csv"]
        scan_note = None
        if flags == "scan":
            outcome = _run_scan(cfg)
            outcome.write_csv(out / "scan_table.csv", digest=cfg.digest)
            artifacts.append("scan_table.csv")
            flags = outcome.winner
            scan_note = f"scan(margin={outcome.margin:.6g})"
            source = "scan"
        traj = cfg.chain(flags.alpha_branch)
        mode = cfg.mode(flags)
        write_trajectory_csv(traj, out / "trajectory.csv",
                             num=cfg.trajectory_samples, digest=cfg.digest)
        field = sample_field(mode, traj, cfg.grid, cfg.field_times)
        field.write_csv(out / "field.csv", digest=cfg.digest)
        pairs = [
            ("command", "solve"),
            ("config", Path(cfg.path).name),
            ("flags", flags.label()),
            ("flags_source", scan_note or source),
            ("mode", mode.describe()),
            ("sector_winding", sector_winding(mode)),
            ("mu_coupling", cfg.mu_coupling),
            ("span", f"{cfg.span[0]!r},{cfg.span[1]!r}"),
            ("coefficients", cfg.coeffs.describe()),
            ("grid", cfg.grid.describe()),
            ("field_times", ",".join(repr(t) for t in cfg.field_times)),
            ("chain_rel_tol", repr(traj.rel_tol)),
            ("chain_abs_tol", repr(traj.abs_tol)),
            ("alpha0", repr(traj.alpha0)),
            ("artifacts", ",".join(artifacts)),
        ]
        _write_summary(out / "summary.txt", cfg.digest, pairs)
    _say(args, f"solve: flags {flags.label()} ({scan_note or source}), "
               f"wrote {', '.join(artifacts)}, summary.txt")
    return EXIT_OK


def cmd_verify(args):
    cfg = RunConfig.load(args.config, flags_override=args.flags)
    if cfg.verify is None:
        raise ConfigError("verify needs a [verification] section")
    if len(cfg.verify.dt_ladder) < 2:
        raise GridTooCoarse("cannot estimate a convergence order from "
                            f"{len(cfg.verify.dt_ladder)} ladder level")
    out = _resolve_out(args)
    flags, source = _resolve_flags(cfg, args)
    with _OutputLock(out):
        _refuse_digest_clash(out, cfg.digest)
        if flags == "scan":
            outcome = _run_scan(cfg)
            outcome.write_csv(out / "scan_table.csv", digest=cfg.digest)
            flags = outcome.winner
            source = f"scan(margin={outcome.margin:.6g})"
        traj = cfg.chain(flags.alpha_branch)
        mode = cfg.mode(flags)
        try:
            report = schrodinger_residual(mode, traj, cfg.coeffs, cfg.grid,
                                          times=cfg.verify.times,
                                          steps=cfg.verify.dt_ladder)
        except GridTooCoarse as exc:
            partial = getattr(exc, "report", None)
            if partial is not None:
                partial.write_csv(out / "residual_ladder.csv",
                                  digest=cfg.digest)
                _say(args, f"verify: FAIL (no convergence) {exc}")
            raise
        report.write_csv(out / "residual_ladder.csv", digest=cfg.digest)
    ok = (report.rel_inf <= cfg.verify.max_rel_inf
          and report.order is not None
          and cfg.verify.order_lo <= report.order <= cfg.verify.order_hi)
    verdict = "PASS" if ok else "FAIL"
    _say(args, f"verify: {verdict} flags {flags.label()} ({source}) "
               f"{report.summary_line()} "
               f"(need rel_inf<={cfg.verify.max_rel_inf:g}, order in "
               f"[{cfg.verify.order_lo:g},{cfg.verify.order_hi:g}])")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_oracle(args):
    cfg = RunConfig.load(args.config, flags_override=args.flags)
    if cfg.oracle is None:
        raise ConfigError("oracle needs an [oracle] section")
    out = _resolve_out(args)
    flags, source = _resolve_flags(cfg, args)
    scan_outcome = None
    if flags == "scan":
        scan_outcome = _run_scan(cfg)
        flags = scan_outcome.winner
        source = f"scan(margin={scan_outcome.margin:.6g})"
    traj = cfg.chain(flags.alpha_branch)
    mode = cfg.mode(flags)
    problem = RadialProblem(coeffs=cfg.coeffs, n=sector_winding(mode),
                            rho_max=cfg.oracle.rho_max,
                            n_rho=cfg.oracle.n_rho, dt=cfg.oracle.dt,
                            span=cfg.span)
    rho = problem.rho
    u0 = np.asarray(assemble_psi(mode, traj, rho, 0.0 * rho, cfg.span[0]),
                    dtype=complex)

    def reference(t):
        return assemble_psi(mode, traj, rho, 0.0 * rho, t)

    with _OutputLock(out):
        if scan_outcome is not None:
            scan_outcome.write_csv(out / "scan_table.csv", digest=cfg.digest)
        result = propagate(problem, u0, record_times=cfg.oracle.record_times,
                           reference=reference)
        result.write_csv(out / "fidelity.csv", digest=cfg.digest)
        result.write_snapshots_csv(out / "oracle_snapshots.csv",
                                   digest=cfg.digest)
        min_f = min(result.fidelities)
        pairs = [
            ("command", "oracle"),
            ("config", Path(cfg.path).name),
            ("flags", flags.label()),
            ("flags_source", source),
            ("mode", mode.describe()),
            ("sector_winding", sector_winding(mode)),
            ("problem", problem.describe()),
            ("norm_drift_total", repr(result.norm_drift_total)),
            ("min_fidelity", repr(min_f)),
            ("threshold", repr(cfg.oracle.min_fidelity)),
        ]
        _write_summary(out / "oracle_summary.txt", cfg.digest, pairs)
    ok = min_f >= cfg.oracle.min_fidelity
    verdict = "PASS" if ok else "FAIL"
    _say(args, f"oracle: {verdict} min fidelity {min_f:.17g} "
               f"(need >= {cfg.oracle.min_fidelity:g}), norm drift "
               f"{result.norm_drift_total:.3g}, nu={mode.nu:g}, "
               f"sector {sector_winding(mode)}")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_scan(args):
    cfg = RunConfig.load(args.config)
    out = _resolve_out(args)
    with _OutputLock(out):
        try:
            outcome = _run_scan(cfg)
        except Inconclusive as exc:
            rows = getattr(exc, "rows", ())
            if rows:
                ranked = sorted(rows, key=lambda r: r.rel_inf)
                margin = (ranked[1].rel_inf / ranked[0].rel_inf
                          if ranked[0].rel_inf > 0 else float("inf"))
                table = ScanOutcome(winner=ranked[0].flags, rows=rows,
                                    margin=margin)
                table.write_csv(out / "scan_table.csv", digest=cfg.digest)
                _say(args, f"scan: INCONCLUSIVE {exc}")
            raise
        outcome.write_csv(out / "scan_table.csv", digest=cfg.digest)
    _say(args, f"scan: winner {outcome.winner.label()} "
               f"margin {outcome.margin:.6g}, wrote scan_table.csv")
    return EXIT_OK


def cmd_bessel_table(args):
    if args.x_min <= 0 or args.x_max <= args.x_min:
        raise InvoscError("bessel-table needs 0 < x_min < x_max")
    if args.num < 2:
        raise InvoscError("bessel-table needs num >= 2")
    xs = np.linspace(args.x_min, args.x_max, args.num)
    lines = ["x,j,n"]
    for x in xs:
        j = bessel_j(args.nu, float(x))
        n = bessel_n(args.nu, float(x))
        lines.append(f"{x:.17g},{j.real:.17g},{n:.17g}")
    text = "\n".join(lines) + "\n"
    if args.out:
        out = _resolve_out(args)
        (out / "bessel_table.csv").write_text(text)
        _say(args, f"bessel-table: wrote {out / 'bessel_table.csv'}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- entry point --------------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="invosc",
        description="Exact oscillator states in a time-dependent magnetic "
                    "field: solve, verify, cross-check.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, with_config=True, with_flags=True):
        p = sub.add_parser(name, help=help_text)
        if with_config:
            p.add_argument("--config", required=True, help="config file path")
        p.add_argument("--out", default=None,
                       help=f"output directory (default ${OUT_DIR_ENV} or .)")
        if with_flags:
            p.add_argument("--flags", default=None,
                           help="override [mode] flags, e.g. s=-1,h=1/2,branch=+")
        p.add_argument("--quiet", action="store_true",
                       help="suppress the stdout summary line")
        p.set_defaults(func=func)
        return p

    add("solve", cmd_solve,
        "solve the chain, assemble the field, write artifacts")
    add("verify", cmd_verify,
        "run the PDE residual ladder against the assembled field")
    add("oracle", cmd_oracle,
        "propagate the independent radial reference and compare")
    add("scan", cmd_scan,
        "rank all 8 convention readings by residual", with_flags=False)
    p = add("bessel-table", cmd_bessel_table,
            "tabulate J_nu and N_nu on a range", with_config=False,
            with_flags=False)
    p.add_argument("nu", type=float, help="order")
    p.add_argument("x_min", type=float, help="first abscissa (> 0)")
    p.add_argument("x_max", type=float, help="last abscissa")
    p.add_argument("num", type=int, help="number of rows")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except GridTooCoarse as exc:
        print(f"error: GridTooCoarse: {exc}", file=sys.stderr)
        return EXIT_LADDER
    except Inconclusive as exc:
        print(f"error: Inconclusive: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except Unstable as exc:
        print(f"error: Unstable: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except InvoscError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
