"""lpqe: 'synth-lab' command implementation"""
import sys

import click

from lpqe.actions.convergence import export_lab, run_lab
from lpqe.actions.report import LabReport
from lpqe.utils.click import apply_overrides, enum_choice, exit_on_failure
from lpqe.utils.common import ensure_dir, log_error, log_info, log_ok
from lpqe.utils.states import LabRegime, ScheduleMode


@click.command('synth-lab')
@click.pass_context
@click.option('--config', 'config_file', required=False, default=None, type=click.Path(dir_okay=False))
@click.option('--delta', type=float, default=None, help="Quantizer step size.")
@click.option('--bits', type=click.IntRange(2, 16), default=None)
@click.option('--eta', type=float, default=None, help="Base learning rate.")
@click.option('--target', type=float, default=None, help="Optimum w* of the quadratic.")
@click.option('--schedule', type=enum_choice(ScheduleMode), default=None)
@click.option('--n-params', type=click.IntRange(min=1), default=None)
@click.option('--regime', 'regimes', type=enum_choice(LabRegime), multiple=True, help="Repeatable, all by default.")
@click.option('-T', '--iterations', type=click.IntRange(min=1), default=None)
@click.option('--seeds', type=click.IntRange(min=1), default=None, help="Number of seeds.")
@click.option('--seed', type=click.IntRange(min=0), default=None, help="First seed.")
@click.option('--strict/--no-strict', default=None, help="Fail on the first broken bound.")
@click.option('--out', 'out_dir', required=False, default=None, type=click.Path(file_okay=False))
@exit_on_failure
def synth_lab_cmd(ctx, config_file, delta, bits, eta, target, schedule, n_params, regimes, iterations, seeds, seed,
                  strict, out_dir):
    """Run SGD on a quadratic under full precision and both roundings, then check the error bounds"""
    config = ctx.obj.load_config(config_file)
    apply_overrides(config, {
        'lab.delta': delta, 'lab.bits': bits, 'lab.eta': eta, 'lab.target': target, 'lab.schedule': schedule,
        'lab.n_params': n_params, 'lab.regimes': regimes, 'lab.iterations': iterations, 'lab.seeds': seeds,
        'lab.strict': strict, 'train.seed': seed, 'output.dir': out_dir,
    })
    config = ctx.obj.finish_config(config)
    spec = config.get_problem_spec()
    first = int(config.get_attr('train.seed'))
    seed_list = list(range(first, first + int(config.get_attr('lab.seeds'))))
    lab_regimes = [LabRegime(item) for item in config.get_attr('lab.regimes')]
    params = spec.bound_params()
    log_info("D={0:.4f}, G={1:.4f}, T0={2}".format(params.D, params.G, params.t0))
    summary = run_lab(spec, lab_regimes, int(config.get_attr('lab.iterations')), seed_list,
                      strict=bool(config.get_attr('lab.strict')))
    out_dir = config.get_attr('output.dir')
    ensure_dir(out_dir)
    with ctx.obj.lock(out_dir):
        export_lab(summary, out_dir)
        LabReport(summary, out_dir, ctx.obj.version).generate()
    broken = [report for report in summary.reports if not report.holds]
    if broken:
        log_error("{0} of {1} bound report(s) exceeded their bound".format(len(broken), len(summary.reports)))
        sys.exit(4)
    log_ok("Lab output written to {!r}".format(out_dir))


if __name__ == "__main__":
    synth_lab_cmd()
