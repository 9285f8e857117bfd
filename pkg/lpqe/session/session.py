"""
This module implements click session handling
"""
import os
import shutil
import sys
from typing import Optional

from pid import PidFile

import lpqe.templates
from lpqe.session.config import Config
from lpqe.utils.common import log_error, log_info, set_debug

PID_NAME = 'lpqe'


class Session:
    """Define click session object"""

    def __init__(self):
        """Initialise all attributes"""
        self.version: str = ''
        self.version_file: str = '../version.txt'
        # noinspection PyBroadException
        try:
            with open(os.path.join(os.path.dirname(__file__), self.version_file)) as f:
                self.version = f.read().strip()
        except IOError as err:
            log_error("I/O error while reading {0!r} ({1!s}): {2!s}".format(self.version_file, err.errno, err.strerror))
        except Exception:
            log_error("Unexpected error while reading {0!r}: {1!s}".format(self.version_file, sys.exc_info()[0]))
        self.config_template_file: str = os.path.join(os.path.dirname(lpqe.templates.__file__), 'experiment.yml')
        self.debug: bool = False

    def __repr__(self) -> str:
        """"String reputation of an object"""
        return u"Session(version={0})".format(self.version)

    def do_version(self):
        """Print version"""
        log_info("lpqe version {}".format(self.version))

    def set_debug(self, enabled: bool):
        """Enable debug output"""
        self.debug = bool(enabled)
        set_debug(self.debug)

    def load_config(self, config_file: Optional[str] = None) -> Config:
        """Configuration from an optional YAML file, without defaults applied yet"""
        return Config(config_file)

    def finish_config(self, config: Config) -> Config:
        """Apply defaults and validate"""
        if self.debug:
            config.set_attr('debug', True)
        config.init()
        config.validate()
        set_debug(self.debug or config.get_debug())
        return config

    def write_config_template(self, out_file) -> bool:
        """Copy the annotated configuration template"""
        try:
            shutil.copyfile(self.config_template_file, out_file)
        except IOError as err:
            log_error("{0} - I/O error({1}): {2}".format(out_file, err.errno, err.strerror))
            return False
        return True

    @staticmethod
    def lock(out_dir) -> PidFile:
        """Lock an output directory for a single run"""
        return PidFile(PID_NAME, piddir=out_dir)
