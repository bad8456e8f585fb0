"""Functions to use for argument parsing."""

import argparse
import os
from typing import Optional


class ExpandUserPath:
    """argparsing type that expands tildes in a path and checks that it exists.

    User directories with tildes (e.g. ~user/foo) are expanded first.
    """

    def __init__(self, kind: Optional[str] = None):
        """Args:
            kind: 'file' or 'dir' to require that type of path, None for either
        """
        self.kind = kind

    def __call__(self, filename: str) -> str:
        fn = os.path.expanduser(filename)
        if not os.path.exists(fn):
            raise argparse.ArgumentTypeError(f'{filename} does not exist')
        if self.kind == 'file' and not os.path.isfile(fn):
            raise argparse.ArgumentTypeError(f'{filename} is not a file')
        if self.kind == 'dir' and not os.path.isdir(fn):
            raise argparse.ArgumentTypeError(f'{filename} is not a directory')
        return fn


def override(text: str) -> str:
    """argparsing type for section.key=value configuration overrides."""
    key, sep, _ = text.partition('=')
    if not sep or not key:
        raise argparse.ArgumentTypeError(f'{text} is not of the form section.key=value')
    return text
