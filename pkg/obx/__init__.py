import logging

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def configure_logging(level: int = logging.INFO) -> None:
    """Configures the root logger once for the whole toolkit.

    Every module logs through ``logging.getLogger(__name__)``; records go to
    stderr so command output written to stdout stays machine readable.
    """
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)
