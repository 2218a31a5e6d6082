#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Генераторы случайных чисел
Все случайные потоки проекта создаются здесь, чтобы запуски с одинаковым сидом
были побитово воспроизводимы
"""

from typing import Any, Dict, List

import numpy as np

# Идентификатор алгоритма, который записывается во все отчёты
RNG_ALGORITHM = "numpy.PCG64"


def make_rng(seed: int) -> np.random.Generator:
    """Создание генератора по сиду

    Args:
        seed: 64-битный сид

    Returns:
        Генератор numpy поверх PCG64
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def spawn_seeds(seed: int, count: int) -> List[np.random.SeedSequence]:
    """Порождение независимых дочерних сидов для разбиения работы на части

    Args:
        seed: Родительский сид
        count: Количество частей

    Returns:
        Список дочерних SeedSequence
    """
    return np.random.SeedSequence(int(seed)).spawn(count)


def derive_seed(seed: int, *keys: int) -> int:
    """Детерминированный производный сид для именованного подпотока

    Args:
        seed: Родительский сид
        keys: Целочисленные ключи подпотока

    Returns:
        Новый 64-битный сид
    """
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def rng_state(rng: np.random.Generator) -> Dict[str, Any]:
    """Состояние генератора в JSON-совместимом виде"""
    return rng.bit_generator.state


def restore_rng(state: Dict[str, Any]) -> np.random.Generator:
    """Восстановление генератора из сохранённого состояния"""
    bit_generator = np.random.PCG64()
    bit_generator.state = state
    return np.random.Generator(bit_generator)


def rng_info(seed: int) -> Dict[str, Any]:
    """Описание генератора для метаданных артефактов"""
    return {"algorithm": RNG_ALGORITHM, "seed": int(seed)}
