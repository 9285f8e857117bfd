"""lpqe: 'init' command implementation"""
import os
import sys

import click

from lpqe.utils.common import log_error, log_info, log_ok


@click.command('init')
@click.pass_context
@click.option('--out', 'out_file', required=False, default='experiment.yml', show_default=True,
              help="Where to write the configuration template.")
@click.option('--force', required=False, is_flag=True, default=False, help="Overwrite an existing file.")
def init_cmd(ctx, out_file, force):
    """Write an annotated experiment configuration"""
    if os.path.exists(out_file) and not force:
        log_error("{!r} already exists, use --force to overwrite".format(out_file))
        sys.exit(2)
    log_info("Writing configuration template to {!r}...".format(out_file))
    if not ctx.obj.write_config_template(out_file):
        sys.exit(1)
    log_ok("Edit it and pass it to 'lpqe train --config {}'".format(out_file))


if __name__ == "__main__":
    init_cmd()
