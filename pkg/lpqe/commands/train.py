"""lpqe: 'train' command implementation"""
import click

from lpqe.actions.report import TrainReport
from lpqe.actions.trainer import Trainer, prepare_data
from lpqe.utils.click import apply_overrides, enum_choice, exit_on_failure
from lpqe.utils.common import ensure_dir, log_info, log_ok
from lpqe.utils.states import GradScale, HeadKind, RegimeKind, RoundingMode, ScheduleMode


@click.command('train')
@click.pass_context
@click.option('--config', 'config_file', required=False, default=None, type=click.Path(dir_okay=False),
              help="Experiment configuration file, see 'lpqe init'.")
@click.option('--data', 'data_path', required=False, default=None, type=click.Path(file_okay=False),
              help="Directory written by 'lpqe preprocess'.")
@click.option('--regime', type=enum_choice(RegimeKind), default=None)
@click.option('--rounding', type=enum_choice(RoundingMode), default=None)
@click.option('--bits', type=click.IntRange(2, 16), default=None)
@click.option('--init-scale', type=click.FloatRange(min=0, min_open=True), default=None)
@click.option('--delta-init', type=float, default=None)
@click.option('--clip-value', type=float, default=None)
@click.option('--delta-lr', type=float, default=None)
@click.option('--grad-scale', type=enum_choice(GradScale), default=None)
@click.option('--delta-optimizer', type=click.Choice(['sgd', 'adam']), default=None)
@click.option('--delta-weight-decay', type=click.FloatRange(min=0), default=None)
@click.option('--head', type=enum_choice(HeadKind), default=None)
@click.option('--dim', type=click.IntRange(min=1), default=None)
@click.option('--bias', type=float, default=None, help="Initial logit bias.")
@click.option('--optimizer', type=click.Choice(['sgd', 'adam']), default=None)
@click.option('--lr', type=float, default=None)
@click.option('--schedule', type=enum_choice(ScheduleMode), default=None)
@click.option('--milestone', 'milestones', type=click.IntRange(min=1), multiple=True,
              help="Epoch after which the learning rate decays, repeatable.")
@click.option('--factor', type=click.FloatRange(min=0, min_open=True), default=None, help="Decay factor.")
@click.option('--weight-decay', type=float, default=None)
@click.option('--epochs', type=click.IntRange(min=1), default=None)
@click.option('--batch-size', type=click.IntRange(min=1), default=None)
@click.option('--patience', type=click.IntRange(min=1), default=None)
@click.option('--seed', type=click.IntRange(min=0), default=None)
@click.option('--threshold', type=click.IntRange(min=1), default=None, help="Minimum token count of generated data.")
@click.option('--synth-fields', type=click.IntRange(min=1), default=None)
@click.option('--synth-vocab', type=click.IntRange(min=1), default=None)
@click.option('--synth-samples', type=click.IntRange(min=1), default=None)
@click.option('--synth-signal', type=click.FloatRange(min=0), default=None)
@click.option('--out', 'out_dir', required=False, default=None, type=click.Path(file_okay=False))
@exit_on_failure
def train_cmd(ctx, config_file, data_path, regime, rounding, bits, init_scale, delta_init, clip_value, delta_lr,
              grad_scale, delta_optimizer, delta_weight_decay, head, dim, bias, optimizer, lr, schedule, milestones,
              factor, weight_decay, epochs, batch_size, patience, seed, threshold, synth_fields, synth_vocab,
              synth_samples, synth_signal, out_dir):
    """Train the CTR model under an embedding regime"""
    config = ctx.obj.load_config(config_file)
    apply_overrides(config, {
        'data.path': data_path, 'regime.kind': regime, 'regime.rounding': rounding, 'regime.bits': bits,
        'regime.delta_init': delta_init, 'regime.clip_value': clip_value, 'optim.delta_lr': delta_lr,
        'regime.grad_scale': grad_scale, 'model.head': head, 'model.dim': dim, 'optim.name': optimizer,
        'optim.lr': lr, 'optim.schedule': schedule, 'optim.weight_decay': weight_decay, 'train.epochs': epochs,
        'train.batch_size': batch_size, 'train.patience': patience, 'train.seed': seed, 'output.dir': out_dir,
        'regime.init_scale': init_scale, 'optim.delta_optimizer': delta_optimizer,
        'optim.delta_weight_decay': delta_weight_decay, 'model.bias': bias, 'optim.milestones': milestones,
        'optim.factor': factor, 'data.threshold': threshold, 'data.synth.n_fields': synth_fields,
        'data.synth.vocab_size': synth_vocab, 'data.synth.n_samples': synth_samples, 'data.synth.signal': synth_signal,
    })
    config = ctx.obj.finish_config(config)
    out_dir = config.get_attr('output.dir')
    ensure_dir(out_dir)
    with ctx.obj.lock(out_dir):
        data = prepare_data(config)
        trainer = Trainer(config, data, ctx.obj.version)
        result = trainer.run(out_dir)
        TrainReport(config, result, out_dir, ctx.obj.version).generate()
    log_info("Compression ratio {0:.2f}x in training, {1:.2f}x for inference".format(
        result.footprint.training_ratio, result.footprint.inference_ratio))
    log_ok("Run {0} written to {1!r}".format(result.run_id, out_dir))


if __name__ == "__main__":
    train_cmd()
