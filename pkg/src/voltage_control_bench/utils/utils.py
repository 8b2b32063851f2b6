import argparse
import json
import logging
import os
from hashlib import sha256
from typing import Any, Optional

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "VCB_OUTPUT_ROOT"


def configure_logging(args: argparse.Namespace) -> None:
    show_debug_logs = hasattr(args, "debug") and args.debug

    logging.basicConfig(
        format="%(asctime)s %(levelname)-8s %(message)s",
        datefmt="%Y-%m-%d %H:%M",
        level=logging.DEBUG if show_debug_logs else logging.INFO,
    )


def hash_string(s: str) -> str:
    return sha256(s.encode()).hexdigest()


def hash_object(obj: Any) -> str:
    """Stable hash of a JSON-serializable object (keys sorted)."""
    return hash_string(json.dumps(obj, sort_keys=True, separators=(",", ":")))


def output_root(default: str, override: Optional[str] = None) -> str:
    """--out beats VCB_OUTPUT_ROOT, which beats the config's output_dir."""
    if override:
        return override
    return os.environ.get(OUTPUT_ROOT_ENV) or default
