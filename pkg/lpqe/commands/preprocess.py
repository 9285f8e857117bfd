"""lpqe: 'preprocess' command implementation"""
import os

import click

from lpqe.actions.dataset import preprocess, synth_ctr
from lpqe.session.config import DATA_KINDS, LOG_BASES
from lpqe.utils.click import apply_overrides, exit_on_failure
from lpqe.utils.common import ensure_dir, log_info, log_ok


@click.command('preprocess')
@click.pass_context
@click.option('--config', 'config_file', required=False, default=None, type=click.Path(dir_okay=False),
              help="Experiment configuration file, its data section is used.")
@click.option('--input', 'input_file', required=False, default=None, type=click.Path(dir_okay=False),
              help="Raw CSV/TSV file, not needed for --kind synth.")
@click.option('--kind', type=click.Choice(DATA_KINDS), default=None, help="Defaults to data.kind.")
@click.option('--threshold', type=click.IntRange(min=1), required=False, default=None,
              help="Minimum token count, defaults to 10 for criteo, 2 for avazu and 1 otherwise.")
@click.option('--seed', type=click.IntRange(min=0), default=None)
@click.option('--numeric', 'numeric_fields', multiple=True, help="Numeric field to discretize, repeatable.")
@click.option('--log-base', type=click.Choice(LOG_BASES), default=None)
@click.option('--synth-fields', type=click.IntRange(min=1), default=None)
@click.option('--synth-vocab', type=click.IntRange(min=1), default=None)
@click.option('--synth-samples', type=click.IntRange(min=1), default=None)
@click.option('--synth-signal', type=click.FloatRange(min=0), default=None)
@click.option('--out', 'out_dir', required=False, default=None, type=click.Path(file_okay=False),
              help="Output directory, defaults to data.path.")
@exit_on_failure
def preprocess_cmd(ctx, config_file, input_file, kind, threshold, seed, numeric_fields, log_base, synth_fields,
                   synth_vocab, synth_samples, synth_signal, out_dir):
    """Encode a raw dataset into train, validation and test splits"""
    config = ctx.obj.load_config(config_file)
    apply_overrides(config, {
        'data.input': input_file, 'data.kind': kind, 'data.threshold': threshold, 'train.seed': seed,
        'data.numeric_fields': numeric_fields, 'data.log_base': log_base, 'data.synth.n_fields': synth_fields,
        'data.synth.vocab_size': synth_vocab, 'data.synth.n_samples': synth_samples,
        'data.synth.signal': synth_signal, 'data.path': out_dir,
    })
    config = ctx.obj.finish_config(config)
    out_dir = config.get_attr('data.path')
    if not out_dir:
        ctx.fail("--out is required unless data.path is set")
    kind = config.get_attr('data.kind')
    input_file = config.get_attr('data.input')
    seed = int(config.get_attr('train.seed'))
    if kind == 'synth':
        ensure_dir(out_dir)
        input_file = os.path.join(out_dir, 'raw.csv')
        n_samples = int(config.get_attr('data.synth.n_samples'))
        data = synth_ctr(int(config.get_attr('data.synth.n_fields')), int(config.get_attr('data.synth.vocab_size')),
                         n_samples, float(config.get_attr('data.synth.signal')), seed)
        data.frame.to_csv(input_file, index=False)
        log_info("Generated {0} sample(s), oracle logloss {1:.4f}".format(n_samples, data.oracle_logloss))
        kind = 'csv'
    elif not input_file:
        ctx.fail("--input is required unless --kind synth")
    prepared = preprocess(input_file, out_dir, kind, config.get_attr('data.threshold'), seed,
                          list(config.get_attr('data.numeric_fields') or []), str(config.get_attr('data.log_base')))
    log_ok("Wrote {0}/{1}/{2} sample(s) and {3} feature(s) to {4!r}; {5} malformed row(s) skipped".format(
        len(prepared.train), len(prepared.validation), len(prepared.test), prepared.vocab.n, out_dir,
        prepared.malformed))


if __name__ == "__main__":
    preprocess_cmd()
