import functools
import sys
from typing import Dict

import click
from pid import PidFileError

from lpqe.errors import LpqeError, StaleTapeError
from lpqe.utils.common import log_error


class AliasedGroup(click.Group):
    """Prefix alias support for click commands"""

    def get_command(self, ctx, cmd_name):
        command = click.Group.get_command(self, ctx, cmd_name)
        if command is not None:
            return command
        matches = sorted(x for x in self.list_commands(ctx) if x.startswith(cmd_name))
        if not matches:
            return None
        if len(matches) == 1:
            return click.Group.get_command(self, ctx, matches[0])
        ctx.fail('Too many matches: {}'.format(', '.join(matches)))
        return None

    def resolve_command(self, ctx, args):
        # report the full command name, not the typed prefix
        _, command, args = super().resolve_command(ctx, args)
        return command.name, command, args


def enum_choice(enum_cls) -> click.Choice:
    """Click choice over the values of an enum"""
    return click.Choice([item.value for item in enum_cls])


def apply_overrides(config, overrides: Dict[str, object]) -> int:
    """Set dotted config keys from command line values that were given"""
    count = 0
    for key, value in overrides.items():
        if value is None or value == ():
            continue
        config.set_attr(key, list(value) if isinstance(value, tuple) else value, override=True)
        count += 1
    return count


def exit_on_failure(func):
    """Turn run-level failures into a logged message and the matching exit code"""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except LpqeError as err:
            log_error("{0}: {1!s}".format(err.__class__.__name__, err))
            sys.exit(err.exit_code)
        except PidFileError as err:
            log_error("Output directory is locked by another run ({!s})".format(err))
            sys.exit(2)
        except StaleTapeError as err:
            log_error("Stale tape: {!s}".format(err))
            sys.exit(4)
        except (ValueError, IndexError) as err:
            log_error("Invalid parameter: {!s}".format(err))
            sys.exit(2)
    return wrapper
