"""
Utility functions for output handling
"""

import json
import math
import os
from fractions import Fraction
from typing import Any, Dict, List

import pandas as pd


def ensure_dir(directory: str):
    """Ensure an output directory exists."""
    os.makedirs(directory, exist_ok=True)


def load_json(filepath: str) -> Any:
    """
    Load JSON file.

    Args:
        filepath: Path to JSON file

    Returns:
        Parsed JSON data or None if file doesn't exist
    """
    if not os.path.exists(filepath):
        return None

    with open(filepath, "r", encoding="utf-8") as f:
        return json.load(f)


def to_jsonable(value: Any) -> Any:
    """Convert report values into plain JSON types (non-finite floats become None)."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if hasattr(value, "item"):
        return to_jsonable(value.item())
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    return str(value)


def save_json(filepath: str, data: Any):
    """
    Save data to JSON file with sorted keys.

    Args:
        filepath: Path to save to
        data: Data to save
    """
    ensure_dir(os.path.dirname(filepath) or ".")

    with open(filepath, "w", encoding="utf-8", newline="\n") as f:
        json.dump(to_jsonable(data), f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")


def save_csv(filepath: str, rows: List[Dict[str, Any]], columns: List[str]):
    """
    Save rows to a CSV file with a fixed column order.

    Args:
        filepath: Path to save to
        rows: One dictionary per row
        columns: Header, in output order
    """
    ensure_dir(os.path.dirname(filepath) or ".")
    df = pd.DataFrame(rows, columns=columns)
    df.to_csv(filepath, index=False, lineterminator="\n", float_format="%.12g")
