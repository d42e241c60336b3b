import configparser
import json

from mgir.errors import ConfigurationError


def load_ini(file):
    config = configparser.ConfigParser()
    with open(file) as f:
        config.read_file(f)
    return config


def load_json(file):
    """Parse a JSON document; syntax errors become a ConfigurationError naming the file and position."""
    with open(file, 'r', encoding='utf-8') as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{file} is not valid JSON",
                                     [f"line {e.lineno} column {e.colno}: {e.msg}"], extra_info=str(file))
