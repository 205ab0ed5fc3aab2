"""Configuration parsing, command-line entry points and result serialisation."""

from cbdi.cli_io.config import RunConfig, dump_config, load_config, parse_config, validate
from cbdi.cli_io.output import csv_text, gnuplot_blocks, read_csv, record_text

__all__ = [
    "RunConfig",
    "csv_text",
    "dump_config",
    "gnuplot_blocks",
    "load_config",
    "parse_config",
    "read_csv",
    "record_text",
    "validate",
]
