"""This module defines functions that deal with program configuration."""

from __future__ import annotations

import os
from logging import getLogger
from pathlib import Path
from typing import Union

from appdirs import user_config_dir
from tomlkit import comment, document, dumps, loads, table

import phasewiz

LOGGER = getLogger("phasewiz.config")

CONFIG_DIR = Path(
    os.environ.get("PHASEWIZ_CONFIG_DIR") or user_config_dir("PhaseWiz", "teauxfu")
)
CONFIG_FILE = Path(CONFIG_DIR, "config.toml")


def ensure_config() -> None:
    """Makes a config directory and file if they don't exist."""
    # make sure we have a place to store data
    if not CONFIG_DIR.is_dir():
        LOGGER.info("No config directory found. Making one now at %s", CONFIG_DIR)
        CONFIG_DIR.mkdir(parents=True)
    # make sure the file exists and isn't empty
    if not CONFIG_FILE.is_file() or os.stat(CONFIG_FILE).st_size == 0:
        LOGGER.info(
            "No config file found in %s. Making one now at %s", CONFIG_DIR, CONFIG_FILE
        )
        init_config()


def init_config() -> None:
    """Writes the default config file."""
    doc = generate_default()
    with CONFIG_FILE.open("w") as file:
        file.write(dumps(doc))
    if CONFIG_FILE.is_file():
        LOGGER.info("Successfully built a new config file at %s", CONFIG_FILE)
    else:
        LOGGER.warning("Failed to init a config file at %s", CONFIG_FILE)


def generate_default() -> document:
    """Generates the default TOML doc."""
    doc = document()
    doc.add(comment("This is the configuration file for PhaseWiz"))
    doc.add(
        comment(
            "This is a TOML document, "
            "made according to the spec at https://toml.io/en/"
        )
    )
    doc.add(
        comment(
            "You may delete this file to generate a new one "
            "the next time you run PhaseWiz"
        )
    )

    # these will get updated between runs
    recents = table()
    recents["manifest"] = ""
    recents["out_dir"] = ""
    doc["recents"] = recents
    doc["recents"].comment("these will get updated between runs")

    params = table()

    params["grad_floor"] = 1e-8
    params["grad_floor"].comment("|grad u| below this counts as zero, a positive float")

    params["profile_step"] = 1e-3
    params["profile_step"].comment("t-spacing of the 1D profile table, <= 1e-2")

    params["profile_t_max"] = 12.0
    params["profile_t_max"].comment("half-width of the 1D profile table")

    params["phi_step"] = 1e-3
    params["phi_step"].comment("RK4 step for diffeomorphism tables")

    params["phi_t_max"] = 10.0
    params["phi_t_max"].comment("half-width of diffeomorphism tables")

    params["sign_tolerance_factor"] = 10.0
    params["sign_tolerance_factor"].comment("noise band for sign checks, times h")

    params["gap_tolerance_factor"] = 10.0
    params["gap_tolerance_factor"].comment(
        "minimality gap tolerance, times h times the perimeter scale"
    )

    params["divergence_tolerance"] = 1e-2
    params["divergence_tolerance"].comment(
        "relative residual allowed in the divergence theorem check"
    )

    params["boundary_identity_factor"] = 10.0
    params["boundary_identity_factor"].comment("X.nu vs |X| tolerance, times h")

    params["solver_tolerance"] = 1e-10
    params["solver_tolerance"].comment("sup-norm of the discrete PDE residual")

    params["competitor_count"] = 100
    params["competitor_count"].comment("seeded competitors per ball, an integer")

    params["output_dir"] = "phasewiz-runs"
    params["output_dir"].comment("where run directories are made if --out is not given")

    doc["defaults"] = params
    doc["defaults"].comment("these will get used when a manifest omits a value")
    return doc


def get_config() -> dict[str, Union[float, int, str]]:
    """Returns the current configuration as a dict."""
    ensure_config()
    with CONFIG_FILE.open("r") as file:
        config = loads(file.read())
    # keys added in newer versions are filled from the defaults
    default = generate_default()
    for name in ("recents", "defaults"):
        if name not in config:
            config[name] = default[name]
            continue
        for key, value in default[name].items():
            if key not in config[name]:
                config[name][key] = value
    return config


def update_config(table: str, key: str, value: Union[float, int, str]) -> None:
    """Update the config with the passed values.

    Args:
        table (str): table to update (expects "recents" or "defaults")
        key (str): the key to update
        value (Union[float, int, str]): the new value of `key`
    """
    ensure_config()
    doc = loads(CONFIG_FILE.read_text())
    if table in doc.keys() and key in doc[table].keys():
        doc[table][key] = value
        CONFIG_FILE.write_text(dumps(doc))
        LOGGER.info("Updated %s.%s to %s", table, key, value)
        phasewiz.CONFIG = get_config()
    else:
        LOGGER.info("Failed to update %s.%s to %s", table, key, value)


def default(key: str) -> Union[float, int, str]:
    """Returns a value from the defaults table of the live config."""
    return phasewiz.CONFIG["defaults"][key]
