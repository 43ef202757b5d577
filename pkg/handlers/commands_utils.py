import copy
import logging
from typing import Iterable, Tuple

from config import LAB_CONFIG
from services.store import load_config_echo
from utils.helpers import ConfigError, ScenarioConfig, deep_merge

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    """Ошибка вызова: неизвестный набор, неклассифицированное хранилище, t0 внутри траектории."""


def print_rows(rows: Iterable[Tuple[str, bool, str]], prefix: str = "") -> int:
    """Печатает строки [PASS]/[FAIL]; возвращает число провалов."""
    failed = 0
    for name, ok, details in rows:
        print(f"[{'PASS' if ok else 'FAIL'}] {prefix}{name}: {details}")
        failed += not ok
    return failed


def store_config(store: str) -> ScenarioConfig:
    """Конфиг, с которым был получен store (эхо из metadata.json поверх умолчаний)."""
    echo = load_config_echo(store)
    errors = []
    raw = deep_merge(copy.deepcopy(LAB_CONFIG), echo, errors)
    if errors:
        raise ConfigError(errors)
    return ScenarioConfig.from_raw(raw)

