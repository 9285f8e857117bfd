"""lpqe: 'show' commands implementation"""
import json

import click

from lpqe.actions.dataset import FeatureVocabulary
from lpqe.quant.store import QuantizedEmbeddingTable
from lpqe.utils.click import AliasedGroup, exit_on_failure
from lpqe.utils.common import log_info


@click.group('show', cls=AliasedGroup)
def show_cmd():
    """Show commands"""


@show_cmd.command('checkpoint')
@click.argument('checkpoint_file', type=click.Path(exists=True, dir_okay=False))
@exit_on_failure
def show_checkpoint(checkpoint_file):
    """Show footprint and step sizes of an LPQE checkpoint"""
    table = QuantizedEmbeddingTable.load(checkpoint_file)
    table.check_invariants()
    delta_min, delta_mean, delta_max = table.delta_stats()
    info = {
        'rows': table.n,
        'dim': table.d,
        'bits': table.spec.bits,
        'rounding': table.spec.mode.value,
        'layout': table.layout.name.lower(),
        'delta': {'min': delta_min, 'mean': delta_mean, 'max': delta_max},
        'footprint': table.footprint().as_dict(),
    }
    log_info(json.dumps(info, indent=2))


@show_cmd.command('vocab')
@click.argument('vocab_file', type=click.Path(exists=True, dir_okay=False))
@click.option('--full', required=False, is_flag=True, default=False, help="List every field.")
@exit_on_failure
def show_vocab(vocab_file, full):
    """Show the size and OOV collapse counts of a vocabulary"""
    vocab = FeatureVocabulary.load(vocab_file)
    info = {'features': vocab.n, 'fields': vocab.n_fields, 'threshold': vocab.threshold,
            'collapsed': int(sum(vocab.collapsed)), 'collapsed_occurrences': int(sum(vocab.collapsed_occurrences))}
    if full:
        info['per_field'] = [{'field': name, 'tokens': len(tokens), 'oov_id': int(oov), 'collapsed': int(count)}
                             for name, tokens, oov, count in zip(vocab.fields, vocab.tokens, vocab.oov_ids,
                                                                 vocab.collapsed)]
    log_info(json.dumps(info, indent=2))


if __name__ == "__main__":
    show_cmd()
