import logging
import math
import os
from typing import Any, Dict

import numpy as np
import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from openpyxl.utils import get_column_letter
from openpyxl.utils.dataframe import dataframe_to_rows

logger = logging.getLogger(__name__)

# 工作表名最长31个字符
MAX_SHEET_TITLE = 31

HEADER_FONT = Font(name="微软雅黑", bold=True, size=11, color="FFFFFF")
HEADER_FILL = PatternFill(start_color="366092", end_color="366092", fill_type="solid")
HEADER_ALIGNMENT = Alignment(horizontal="center", vertical="center", wrap_text=True)
CELL_BORDER = Border(*(Side(style="thin") for _ in range(4)))
FLOAT_FORMAT = "0.000000"


class ExcelFormatter:
    """把研究结果表写入带格式的 Excel 工作簿，每张表一个工作表"""

    column_width_mapping = {
        'method': 14,
        'parameter': 14,
        'criterion': 40,
        'detail': 70,
        'passed': 10,
        't': 8,
        'N': 10,
        'T': 10,
        'replicate': 12,
    }

    def format_excel(self, tables: Dict[str, pd.DataFrame], output_path: str) -> bool:
        """
        保存多张结果表到一个Excel文件

        参数:
            tables: {工作表名: DataFrame}，按插入顺序生成工作表
            output_path: 输出Excel文件路径

        返回:
            是否成功保存
        """
        try:
            wb = Workbook()
            wb.remove(wb.active)
            for name, df in tables.items():
                if df is None or df.empty:
                    logger.debug(f"跳过空表 {name}")
                    continue
                formatted_df = df.copy()
                for col in formatted_df.columns:
                    formatted_df[col] = formatted_df[col].apply(self._format_cell_value)
                ws = wb.create_sheet(str(name)[:MAX_SHEET_TITLE])
                self._add_data_to_sheet(ws, formatted_df)

            if not wb.worksheets:
                logger.warning("没有可写入的结果表，未生成Excel文件")
                return False
            output_dir = os.path.dirname(output_path)
            if output_dir and not os.path.exists(output_dir):
                os.makedirs(output_dir)
            wb.save(output_path)
            logger.info(f"Excel数据已成功保存到: {output_path}")
            return True

        except (OSError, ValueError) as e:
            logger.error(f"保存Excel文件时出错: {str(e)}")
            return False

    def _add_data_to_sheet(self, ws, df: pd.DataFrame):
        """写入一张结果表：表头着色、按列名设宽度、浮点列统一小数位"""
        for row in dataframe_to_rows(df, index=False, header=True):
            ws.append(row)

        for cell in ws[1]:
            cell.font = HEADER_FONT
            cell.fill = HEADER_FILL
            cell.alignment = HEADER_ALIGNMENT
            ws.column_dimensions[get_column_letter(cell.column)].width = \
                self.column_width_mapping.get(cell.value, 16)
        ws.row_dimensions[1].height = 25

        for row in ws.iter_rows(min_row=1, max_row=ws.max_row, max_col=ws.max_column):
            for cell in row:
                cell.border = CELL_BORDER
                if cell.row > 1 and isinstance(cell.value, float):
                    cell.number_format = FLOAT_FORMAT

        # 冻结表头
        ws.freeze_panes = "A2"

    def _format_cell_value(self, value: Any) -> Any:
        """
        格式化单元格值以适应Excel：NaN/None 写为空，numpy 标量转为 Python 数值
        """
        if value is None:
            return ""
        if isinstance(value, (np.bool_, bool)):
            return bool(value)
        if isinstance(value, np.integer):
            return int(value)
        if isinstance(value, (np.floating, float)):
            value = float(value)
            return "" if math.isnan(value) else value
        if isinstance(value, np.ndarray):
            return ", ".join(str(v) for v in value.tolist())
        return value
