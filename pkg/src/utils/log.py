"""Logger lookup that works both inside and outside Prefect runs."""

import logging
from typing import Union

from prefect.exceptions import MissingContextError
from prefect.logging import get_logger as get_prefect_logger
from prefect.logging import get_run_logger


def get_logger(name: str = "protein_id") -> Union[logging.Logger, logging.LoggerAdapter]:
    """Return the active run logger, or a named Prefect logger outside a run."""
    try:
        return get_run_logger()
    except MissingContextError:
        return get_prefect_logger(name)
