import logging
from pathlib import Path

# =============================================================================
# БАЗОВЫЕ ПУТИ ПРОЕКТА
# =============================================================================

# Базовый каталог проекта — один источник правды
BASE_DIR = Path(__file__).resolve().parent.parent

# Файлы задач (разобранные примеры и тестовые фикстуры)
PROBLEMS_DIR = BASE_DIR / "problems"

# Таблицы xlsx по умолчанию; каталог создаётся при первой записи
OUTPUT_DIR = BASE_DIR / "output"

# =============================================================================
# ЧИСЛЕННЫЕ ДОПУСКИ
# =============================================================================

# Принадлежность множеству, допустимость, активные ограничения
TOL = 1e-9

# Склейка совпадающих вершин при канонизации
DEDUP_TOL = 1e-12

# Невязка в ответах LP
LP_TOL = 1e-9

# Шаги одностороннего конечного разностного отношения
FD_STEPS = (1e-4, 1e-5, 1e-6)

# =============================================================================
# БЮДЖЕТЫ ПЕРЕБОРА
# =============================================================================

# Кортежи вершин при переборе определителей
VERTEX_TUPLE_BUDGET = 10**6

# Наборы (w0*, v_j*, w_j*, z_i*) при проверке множителей
SELECTION_BUDGET = 10**5

# Точки при плотном поиске расстояния до множества решений
SOLUTION_SAMPLE_BUDGET = 10**6

# Итерации алгоритма Вульфа (ближайшая точка многогранника)
WOLFE_MAX_ITER = 1000

# =============================================================================
# ПАРАМЕТРЫ ПРОВЕРОК ПО УМОЛЧАНИЮ
# =============================================================================

DEFAULT_SEED = 0

# Лестница штрафного параметра c
DEFAULT_C_LADDER = (0.5, 1.0, 2.0, 10.0, 100.0)

# Сетки направлений λ в проверке линейной независимости
LAMBDA_GRID_2D = 720
LAMBDA_GRID_3D = 10_000

# Проверка полного ранга квадратной системы по умолчанию:
# "interval" (оценка по слагаемым Минковского) или "det-range" (точный диапазон)
SQUARE_RANK_METHOD = "interval"

# Радиусы для выборочной оценки сильного наклона (убывают)
SLOPE_RADII = (1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5)
SLOPE_SAMPLES_PER_RADIUS = 2000

# Норма в пространстве Y: "l1" (точный квазидифференциал) или "l2"
DEFAULT_NORM = "l1"

# Параметры сеточной проверки регулярности
DEFAULT_K = 2.0
DEFAULT_RADIUS = 0.1
DEFAULT_GRID = 11

# =============================================================================
# ЛОГИРОВАНИЕ
# =============================================================================

LOG_FORMAT = "[%(levelname)s] %(name)s: %(message)s"


def setup_logging(level=logging.WARNING):
    logging.basicConfig(level=level, format=LOG_FORMAT)
