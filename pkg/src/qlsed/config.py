"""Small helpers for reading TOML configuration files."""

import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def load_toml(path):
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def parse_complex(value):
    """Complex number from a number, a ``[re, im]`` pair or a string like ``"1-2j"``."""
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValueError("complex pairs need exactly two entries")
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        return complex(value.replace(" ", ""))
    return complex(value)
