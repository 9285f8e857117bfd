"""lpqe: 'bounds' command implementation"""
import sys

import click
import pandas as pd

from lpqe.actions.convergence import SNAPSHOTS, BoundParams, ConvexProblemSpec, theorem1_rhs, theorem2_rhs
from lpqe.errors import ConfigError
from lpqe.utils.click import exit_on_failure
from lpqe.utils.common import log_debug, log_ok

COLUMNS = ['T', 'T0', 'theorem1', 'distance', 'gradient', 'floor', 'early', 'late', 'theorem2']


def bounds_table(params: BoundParams, horizons) -> pd.DataFrame:
    """Bound values per horizon, the deterministic bound split into its terms"""
    rows = []
    for T in horizons:
        terms = theorem2_rhs(params, T)
        row = {'T': T, 'T0': params.t0, 'theorem1': theorem1_rhs(params, T)}
        row.update({k: v for k, v in terms.as_dict().items() if k != 'total'})
        row['theorem2'] = terms.total
        rows.append(row)
    return pd.DataFrame(rows, columns=COLUMNS)


@click.command('bounds')
@click.option('-D', '--diameter', type=float, default=None, help="Domain diameter, derived from --bits if unset.")
@click.option('-G', '--grad-bound', type=float, default=None, help="Gradient bound, derived from --bits if unset.")
@click.option('-d', '--dim', type=click.IntRange(min=1), default=1, show_default=True)
@click.option('--eta', type=float, default=1.0, show_default=True)
@click.option('--delta', type=float, default=0.01, show_default=True)
@click.option('--bits', type=click.IntRange(2, 16), default=8, show_default=True)
@click.option('-T', '--horizon', 'horizons', type=click.IntRange(min=1), multiple=True,
              help="Repeatable, defaults to 10, 100 and 1000.")
@click.option('--out', 'out_file', required=False, default=None, type=click.Path(dir_okay=False),
              help="CSV file, standard output if unset.")
@exit_on_failure
def bounds_cmd(diameter, grad_bound, dim, eta, delta, bits, horizons, out_file):
    """Tabulate the stochastic and deterministic rounding error bounds"""
    if diameter is None or grad_bound is None:
        if delta <= 0:
            raise ConfigError("--diameter and --grad-bound are required when --delta is 0")
        spec = ConvexProblemSpec(delta=delta, bits=bits, eta=eta, d=dim)
        diameter = spec.diameter if diameter is None else diameter
        grad_bound = spec.grad_bound if grad_bound is None else grad_bound
        log_debug("Representable range gives D={0:.6g}, G={1:.6g}".format(diameter, grad_bound))
    params = BoundParams(diameter, grad_bound, dim, eta, delta)
    table = bounds_table(params, sorted(set(horizons or SNAPSHOTS)))
    if out_file is None:
        table.to_csv(sys.stdout, index=False)
        return
    table.to_csv(out_file, index=False)
    log_ok("Wrote {0} row(s) to {1!r}, T0={2}".format(len(table), out_file, params.t0))


if __name__ == "__main__":
    bounds_cmd()
