from __future__ import annotations

import logging
from typing import Any, Dict, Optional


def setup_logging(config: Dict[str, Any], level_override: Optional[str] = None) -> None:
    logging_cfg = config.get("logging") or {}
    level_name = str(level_override or logging_cfg.get("level", "INFO")).upper()
    level = getattr(logging, level_name, logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s - %(levelname)s - %(message)s", force=True)

    silence = logging_cfg.get("silence_third_party", True)
    if str(silence).strip().lower() not in ("0", "false", "no", "off"):
        # numexpr announces its thread count on import
        logging.getLogger("numexpr").setLevel(logging.WARNING)
