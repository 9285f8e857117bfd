"""lpqe: 'sweep' command implementation"""
import click

from lpqe.actions.trainer import prepare_data, run_sweep
from lpqe.utils.click import apply_overrides, enum_choice, exit_on_failure
from lpqe.utils.common import ensure_dir, log_info, log_ok
from lpqe.utils.states import GradScale, RegimeKind

DELTA_LRS = (1e-3, 1e-4, 2e-5, 1e-5, 1e-6)


@click.command('sweep')
@click.pass_context
@click.option('--config', 'config_file', required=False, default=None, type=click.Path(dir_okay=False))
@click.option('--data', 'data_path', required=False, default=None, type=click.Path(file_okay=False))
@click.option('--regime', type=enum_choice(RegimeKind), default=None)
@click.option('--delta-lr', 'delta_lrs', type=float, multiple=True,
              help="Repeatable, defaults to 1e-3, 1e-4, 2e-5, 1e-5 and 1e-6.")
@click.option('--grad-scale', 'grad_scales', type=enum_choice(GradScale), multiple=True,
              help="Repeatable, defaults to all scales.")
@click.option('--epochs', type=click.IntRange(min=1), default=None)
@click.option('--seed', type=click.IntRange(min=0), default=None)
@click.option('--out', 'out_dir', required=False, default=None, type=click.Path(file_okay=False))
@exit_on_failure
def sweep_cmd(ctx, config_file, data_path, regime, delta_lrs, grad_scales, epochs, seed, out_dir):
    """Best validation metrics over step size learning rates and gradient scales"""
    config = ctx.obj.load_config(config_file)
    apply_overrides(config, {'data.path': data_path, 'regime.kind': regime, 'train.epochs': epochs,
                             'train.seed': seed, 'output.dir': out_dir})
    config = ctx.obj.finish_config(config)
    delta_lrs = list(delta_lrs or DELTA_LRS)
    grad_scales = list(grad_scales or [item.value for item in GradScale])
    out_dir = config.get_attr('output.dir')
    ensure_dir(out_dir)
    with ctx.obj.lock(out_dir):
        data = prepare_data(config)
        log_info("Sweeping {0} cell(s)".format(len(delta_lrs) * len(grad_scales)))
        table = run_sweep(config, data, delta_lrs, grad_scales, out_dir, ctx.obj.version)
    best = table.loc[table['val_logloss'].idxmin()]
    log_ok("Best cell delta_lr={0!r}, grad_scale={1}: validation logloss {2:.6f}".format(
        best['delta_lr'], best['grad_scale'], best['val_logloss']))


if __name__ == "__main__":
    sweep_cmd()
