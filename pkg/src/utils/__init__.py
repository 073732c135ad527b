from src.utils.excel_formatter import ExcelFormatter
from src.utils.rng import make_rng, spawn_seeds

__all__ = ['ExcelFormatter', 'make_rng', 'spawn_seeds']
