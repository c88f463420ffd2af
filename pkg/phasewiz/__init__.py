"""The parent module for the phasewiz package."""

from __future__ import annotations

from phasewiz.helpers.configuration import get_config

CONFIG: dict = get_config()
