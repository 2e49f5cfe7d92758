"""Command-line frontend.

Subcommands: ``exact``, ``run``, ``sweep``, ``bomb-protocol``, ``env-overlap``.
Flags override fields loaded from ``--config``; the seed falls back to the
``SIM_SEED`` environment variable and then to 0.

Exit status: 0 on success, 2 on a bad configuration, 3 when a Monte Carlo
run disagrees with the exact distribution at 5 sigma.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .dynamics import DecoherenceLaw, difference_form_overlap, finite_env_overlap, random_block_hamiltonian
from .expstates import overlap_estimate
from .mc import compare_to_oracle, run_many, wilson_halfwidth
from .measure import PolicyKind
from .scenarios import Kind, Scenario, ScenarioError, exact_distribution, sweep

NUM = "%.12g"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: dict = field(default_factory=lambda: {"kind": Kind.DOUBLE_SLIT.value})
    trials: int = 10000
    seed: Optional[int] = None
    output: str = "table"
    out_path: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "scenario": self.scenario,
                "trials": self.trials,
                "seed": self.seed,
                "output": self.output,
                "out_path": self.out_path,
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(data) - {"scenario", "trials", "seed", "output", "out_path"})
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        cfg = cls(**data)
        cfg.check()
        return cfg

    def check(self) -> None:
        if not isinstance(self.scenario, dict) or "kind" not in self.scenario:
            raise ConfigError("config scenario must be an object with a kind")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError(f"trials must be a positive integer, got {self.trials!r}")
        if self.seed is not None and not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        if self.output not in ("csv", "table"):
            raise ConfigError(f"output must be csv or table, got {self.output!r}")

    def build_scenario(self) -> Scenario:
        return Scenario.from_dict(self.scenario)

    def resolved_seed(self) -> int:
        if self.seed is not None:
            return self.seed
        env = os.environ.get("SIM_SEED")
        if env is None:
            return 0
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"SIM_SEED must be an integer, got {env!r}") from None


def parse_grid(text: str) -> tuple[float, ...]:
    """``start:stop:step`` with stop included when it lies on the grid, or one value."""
    parts = text.split(":")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"cannot parse tau {text!r}") from None
    if len(values) == 1:
        return (values[0],)
    if len(values) != 3:
        raise ConfigError(f"tau grid must be start:stop:step, got {text!r}")
    start, stop, step = values
    if not (step > 0) or stop < start:
        raise ConfigError(f"tau grid needs step > 0 and stop >= start, got {text!r}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(float(start + k * step) for k in range(n))


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.exit(2, f"{self.prog}: error: {message}\n")


_SCENARIO_FLAGS = {
    "epsilon": "epsilon",
    "lambda_": "lambda_rate",
    "omega": "omega",
    "env_dim": "env_dim",
    "env_seed": "env_seed",
    "max_rounds": "max_rounds",
    "idler_basis": "idler_basis",
    "order": "measure_order",
    "bomb": "bomb_kind",
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--scenario", choices=[k.value for k in Kind])
    p.add_argument("--policy", choices=[k.value for k in PolicyKind])
    p.add_argument("--tau-star", type=float)
    p.add_argument("--lambda", dest="lambda_", type=float)
    p.add_argument("--omega", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--idler-basis", choices=["which-path", "plus-minus"])
    p.add_argument("--order", choices=["screen-first", "idler-first"])
    p.add_argument("--bomb", choices=["real", "dud"])
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--tau", help="single value or start:stop:step")
    p.add_argument("--env-dim", type=int)
    p.add_argument("--env-seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--bombs", type=int, help="alias of --trials for the bomb protocol")
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=["csv", "table"])
    p.add_argument("--out", help="write output to this file instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="twopath", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (
        ("exact", "print the exact outcome distribution"),
        ("run", "sample trials and compare with the exact distribution"),
        ("sweep", "exact curves over a tau grid as CSV"),
        ("bomb-protocol", "batch of bomb-saving protocol runs"),
    ):
        _common(sub.add_parser(name, help=help_))
    env = sub.add_parser("env-overlap", help="log10 overlap of two macroscopic pointer states")
    env.add_argument("--lambda-atom", type=float, required=True)
    env.add_argument("--n", type=float, required=True)
    env.add_argument("--format", choices=["csv", "table"], default="csv")
    env.add_argument("--out")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = RunConfig.from_json(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    else:
        cfg = RunConfig()
    scen = dict(cfg.scenario)
    if args.command == "bomb-protocol":
        if args.scenario not in (None, Kind.BOMB_PROTOCOL.value):
            raise ConfigError("bomb-protocol runs the bomb-protocol scenario only")
        args.scenario = Kind.BOMB_PROTOCOL.value
    if args.scenario is not None and args.scenario != scen.get("kind"):
        scen = {"kind": args.scenario}
    for flag, name in _SCENARIO_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            scen[name] = value
    if args.tau is not None:
        grid = parse_grid(args.tau)
        scen["tau"] = list(grid) if args.command == "sweep" else (grid[0] if len(grid) == 1 else list(grid))
    if args.policy is not None or args.tau_star is not None:
        kind = args.policy or (PolicyKind.THRESHOLD.value if args.tau_star is not None else None)
        old = scen.get("policy") or {}
        tau_star = args.tau_star if args.tau_star is not None else old.get("tau_star")
        if kind is None:
            kind = old.get("kind", PolicyKind.UNITARY.value)
        if kind != PolicyKind.THRESHOLD.value and args.tau_star is not None:
            raise ConfigError("--tau-star only applies to the threshold policy")
        scen["policy"] = {"kind": kind, "tau_star": tau_star if kind == PolicyKind.THRESHOLD.value else None}
    cfg.scenario = scen
    if args.trials is not None and args.bombs is not None and args.trials != args.bombs:
        raise ConfigError("--trials and --bombs disagree")
    trials = args.bombs if args.bombs is not None else args.trials
    if trials is not None:
        cfg.trials = trials
    if args.seed is not None:
        cfg.seed = args.seed
    if args.format is not None:
        cfg.output = args.format
    if args.out is not None:
        cfg.out_path = args.out
    cfg.check()
    return cfg


def _fmt(x: float) -> str:
    return NUM % x


def _render(header: Sequence[str], rows: Sequence[Sequence], output: str) -> str:
    cells = [[c if isinstance(c, str) else _fmt(c) for c in row] for row in rows]
    buf = io.StringIO()
    if output == "csv":
        buf.write(",".join(header) + "\n")
        for row in cells:
            buf.write(",".join(row) + "\n")
        return buf.getvalue()
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h) for i, h in enumerate(header)]
    buf.write("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip() + "\n")
    for row in cells:
        buf.write("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() + "\n")
    return buf.getvalue()


def cmd_exact(cfg: RunConfig) -> tuple[str, int]:
    s = cfg.build_scenario()
    if s.is_grid:
        raise ConfigError("exact takes a single tau; use sweep for a grid")
    dist = exact_distribution(s)
    rows = [(dist.flat_label(labels), p) for labels, p in dist.probs.items()]
    text = _render(("outcome", "probability"), rows, cfg.output)
    if cfg.output == "table" and len(dist.events) > 1:
        for event in dist.events:
            marg = "  ".join(f"{lab}={_fmt(p)}" for lab, p in dist.marginal(event).items())
            text += f"# marginal {event}: {marg}\n"
    return text, 0


def cmd_run(cfg: RunConfig) -> tuple[str, int]:
    s = cfg.build_scenario()
    if s.is_grid:
        raise ConfigError("run takes a single tau; use sweep for a grid")
    seed = cfg.resolved_seed()
    summary = run_many(s, cfg.trials, seed)
    exact = exact_distribution(s)
    report = compare_to_oracle(summary, exact)
    rows = []
    for cell in report.cells:
        rows.append(
            (
                exact.flat_label(cell.labels),
                str(cell.count),
                cell.freq,
                wilson_halfwidth(cell.count, summary.total),
                cell.p,
                "" if cell.z is None else _fmt(cell.z),
                "pass" if cell.passed else "FAIL",
            )
        )
    text = _render(("outcome", "count", "freq", "ci95_halfwidth", "p_exact", "z", "check"), rows, cfg.output)
    verdict = "pass" if report.passed else "FAIL"
    text += f"# trials={summary.total} seed={seed} oracle={verdict}\n"
    return text, 0 if report.passed else 3


def cmd_sweep(cfg: RunConfig) -> tuple[str, int]:
    s = cfg.build_scenario()
    taus = s.param("tau")
    taus = taus if isinstance(taus, tuple) else (taus,)
    if s.kind is Kind.DECOHERENCE:
        law = DecoherenceLaw(s.param("lambda_rate"))
        unitary = sweep(Scenario(Kind.DECOHERENCE, lambda_rate=s.lambda_rate, tau=taus))
        policy = sweep(Scenario(Kind.DECOHERENCE, policy=s.policy, lambda_rate=s.lambda_rate, tau=taus))
        rows = [
            (t, du["A"], dp["A"], du["B"], law.overlap(t))
            for (t, du), (_, dp) in zip(unitary, policy)
        ]
        header = ("tau", "p_A_exact_unitary", "p_A_exact_policy", "p_B_exact_unitary", "c_tau")
    elif s.kind is Kind.ROTATING_IDLER:
        rows = [(t, d["A"], d["B"]) for t, d in sweep(s)]
        header = ("tau", "p_A", "p_B")
    elif s.kind is Kind.FINITE_ENV:
        bh = random_block_hamiltonian(s.param("env_dim"), s.param("env_seed"))
        rows = []
        for t in taus:
            c = finite_env_overlap(bh, t)
            rows.append((t, c.real, c.imag, abs(c), abs(difference_form_overlap(bh, t))))
        header = ("t", "re_c", "im_c", "abs_c", "abs_c_paperform")
    else:
        raise ConfigError(f"{s.kind.value} has no time parameter to sweep")
    return _render(header, rows, cfg.output), 0


def cmd_env_overlap(lambda_atom: float, n_atoms: float, output: str = "csv") -> tuple[str, int]:
    est = overlap_estimate(lambda_atom, n_atoms)
    rows = [("log10_overlap", est.log10_overlap)]
    if est.log10_overlap < 0:
        rows.append(("log10_decades", est.log10_decades))
    return _render(("quantity", "value"), rows, output), 0


def _emit(text: str, out_path: Optional[str]) -> None:
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "env-overlap":
            text, code = cmd_env_overlap(args.lambda_atom, args.n, args.format)
            _emit(text, args.out)
            return code
        cfg = config_from_args(args)
        handler = {"exact": cmd_exact, "run": cmd_run, "bomb-protocol": cmd_run, "sweep": cmd_sweep}[args.command]
        text, code = handler(cfg)
        _emit(text, cfg.out_path)
        return code
    except (ConfigError, ScenarioError, ValueError, OSError) as exc:
        sys.stderr.write(f"twopath {args.command}: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
