"""
Low-precision quantized embedding training toolkit
"""
import sys

import click

from lpqe.commands.bounds import bounds_cmd
from lpqe.commands.init import init_cmd
from lpqe.commands.preprocess import preprocess_cmd
from lpqe.commands.show import show_cmd
from lpqe.commands.sweep import sweep_cmd
from lpqe.commands.synth_lab import synth_lab_cmd
from lpqe.commands.train import train_cmd
from lpqe.session.session import Session
from lpqe.utils.click import AliasedGroup


@click.group(invoke_without_command=True, cls=AliasedGroup)
@click.option('-v', '--version', required=False, is_flag=True, default=False, help="Print version and exit.")
@click.option('--debug', required=False, is_flag=True, default=False, help="Print debug messages.")
@click.pass_context
def lpqe(ctx, version, debug):
    """Quantized embedding training and convergence lab"""
    if ctx.obj is None:
        ctx.obj = Session()
    # Print version
    if version:
        ctx.obj.do_version()
        sys.exit(0)
    ctx.obj.set_debug(debug)
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


lpqe.add_command(bounds_cmd)
lpqe.add_command(init_cmd)
lpqe.add_command(preprocess_cmd)
lpqe.add_command(show_cmd)
lpqe.add_command(sweep_cmd)
lpqe.add_command(synth_lab_cmd)
lpqe.add_command(train_cmd)


def main():
    """Main function"""
    # pylint: disable=no-value-for-parameter,unexpected-keyword-arg
    lpqe(
        obj=Session(),
        help_option_names=["-h", "--help"],
        max_content_width=120,
        auto_envvar_prefix="LPQE"
    )


if __name__ == "__main__":
    main()
