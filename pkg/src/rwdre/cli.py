"""Command line entry point.

Exit codes: 0 all gates pass, 1 a gate failed, 2 usage or config error
(click also exits 2 on bad arguments), 3 resource error.
"""
from __future__ import annotations

import sys

import click

from . import config as cfgmod
from . import experiments as ex
from .environment import ResourceError

EXIT_OK, EXIT_GATE, EXIT_USAGE, EXIT_RESOURCE = 0, 1, 2, 3


def _report(res: ex.ExperimentResult) -> None:
    mode = " (quick mode)" if res.quick else ""
    click.echo(f"{res.name}{mode}: {res.seconds:.1f}s")
    for g in res.gates:
        click.echo("  " + g.line())


def _execute(experiment: str, config_path, out_dir, seed, workers, quick, replicas=None) -> int:
    try:
        overrides = {"run.seed": seed, "run.workers": workers, "run.replicas": replicas}
        if config_path:
            cfg = cfgmod.load(config_path, experiment, **overrides)
        else:
            cfg = cfgmod.resolve({}, experiment, **overrides)
    except cfgmod.ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_USAGE
    try:
        res = ex.run_experiment(cfg, cfg["run"]["workers"], quick)
    except ResourceError as exc:
        click.echo(f"resource error in {experiment}: {exc} (needs {exc.required_bytes} bytes)", err=True)
        return EXIT_RESOURCE
    except MemoryError as exc:
        click.echo(f"resource error in {experiment}: {exc}", err=True)
        return EXIT_RESOURCE
    except cfgmod.ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_USAGE
    if out_dir:
        ex.write_outputs(res, cfg, out_dir)
    _report(res)
    return EXIT_OK if res.passed else EXIT_GATE


@click.group()
def main():
    """Simulation and verification suite for walks in a random walk environment."""


def _experiment_command(name: str):
    @click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
    @click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
    @click.option("--seed", type=int, default=None)
    @click.option("--workers", type=int, default=None)
    @click.option("--replicas", type=int, default=None)
    @click.option("--quick", is_flag=True, help="fewer replicas, widened tolerances")
    def cmd(config_path, out_dir, seed, workers, quick, replicas):
        sys.exit(_execute(name, config_path, out_dir, seed, workers, quick, replicas))

    cmd.__doc__ = f"Run the {name} experiment."
    return main.command(name)(cmd)


for _name in cfgmod.EXPERIMENTS:
    _experiment_command(_name)


@main.command("run")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--quick", is_flag=True)
def run_cmd(config_path, out_dir, seed, workers, quick):
    """Run the experiment named by run.experiment in CONFIG_PATH."""
    try:
        cfg = cfgmod.load(config_path)
    except cfgmod.ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    sys.exit(_execute(cfg["run"]["experiment"], config_path, out_dir, seed, workers, quick))


@main.command("acceptance")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="acceptance-out")
@click.option("--workers", type=int, default=1)
@click.option("--quick", is_flag=True)
@click.option("--only", type=int, multiple=True, help="criterion numbers to run")
def acceptance_cmd(out_dir, workers, quick, only):
    """Run the acceptance criteria with pinned seeds."""
    from . import acceptance

    results = acceptance.run_all(out_dir, quick, workers, only or None, echo=click.echo)
    sys.exit(EXIT_OK if all(r.passed for r in results) else EXIT_GATE)


@main.group("renorm")
def renorm_group():
    """Scale arithmetic and crossing probabilities."""


@renorm_group.command("verify-scales")
@click.option("--L0", "L0", default="10^50")
@click.option("--k-top", "k_top", type=int, default=20)
@click.option("--rho-hat", type=float, default=1.0)
@click.option("--v-hat", type=float, default=1.0)
@click.option("--direction", type=click.Choice(["nonincreasing", "nondecreasing"]), default="nonincreasing")
@click.option("--k-hat", type=int, default=0)
def verify_scales(L0, k_top, rho_hat, v_hat, direction, k_hat):
    """Print the scale table and every inequality flag."""
    try:
        tb, table, gates, summ = ex.scales_result(ex.parse_big_int(L0), k_top, rho_hat, v_hat, direction, k_hat)
    except ValueError as exc:
        click.echo(f"usage error: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    click.echo(",".join(table.columns))
    for row in table.rows:
        click.echo(",".join(ex._fmt(v) for v in row))
    click.echo(f"iota={summ['iota']} v_inf={summ['v_inf']}")
    for name, ok in tb.flags.items():
        click.echo(f"{name}: {'true' if ok else 'false'}")
    sys.exit(EXIT_OK if tb.all_flags() else EXIT_GATE)


@renorm_group.command("estimate-pk")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--replicas", type=int, default=None)
@click.option("--quick", is_flag=True)
def estimate_pk_cmd(config_path, out_dir, seed, workers, replicas, quick):
    """Monte Carlo crossing probabilities; CSV k, L_k, rho_k, v_k, phat, ci_lo, ci_hi."""
    sys.exit(_execute("pk", config_path, out_dir, seed, workers, quick, replicas))


@main.group("slt")
def slt_group():
    """Heat kernels and soft local times."""


@slt_group.command("heat-kernel")
@click.option("--d", "d", type=int, default=1)
@click.option("--laziness", type=float, default=0.5)
@click.option("--nmax", type=int, default=64)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def heat_kernel_cmd(d, laziness, nmax, out_path):
    """Write p_n(0, x) for n <= nmax as CSV n, x..., p."""
    try:
        table, summ, gates = ex.heat_kernel_table(d, laziness, nmax)
    except ResourceError as exc:
        click.echo(f"resource error: {exc}", err=True)
        sys.exit(EXIT_RESOURCE)
    ex.write_table(table, out_path, [f"d={d} laziness={laziness!r} nmax={nmax}"])
    click.echo(f"C_sup={summ['C_sup']!r} C_lip={summ['C_lip']!r}")
    for g in gates:
        click.echo(g.line())
    sys.exit(EXIT_OK if all(g.passed for g in gates) else EXIT_GATE)


if __name__ == "__main__":
    main()
