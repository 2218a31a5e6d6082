"""Общие фикстуры тестов"""

import os

import numpy as np
import pytest

from core.priors import LabelDistribution, lt_exponential_prior
from services.data_service import circle_mixture

os.environ.setdefault("LAB_PROGRESS", "0")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def two_class_prior():
    return LabelDistribution(np.array([0.8, 0.2]))


@pytest.fixture
def lt_mixture():
    """Трёхклассовая смесь на окружности с ρ = 100"""
    return circle_mixture(lt_exponential_prior(3, 100.0), radius=2.5, sigma=1.0)


@pytest.fixture
def five_class_mixture():
    return circle_mixture(lt_exponential_prior(5, 100.0), radius=2.5, sigma=1.0)
