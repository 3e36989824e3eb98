"""
File Handler Module
Raw tensors, 8-bit images, CSV tables and YAML key-value files.
Every writer is byte-stable: fixed endianness, fixed float formatting, '\n' line endings.
"""

import json
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from PIL import Image

from utils.logger import LoggerSetup, logger

PathLike = Union[str, Path]

TENSOR_DTYPE = "<f8"
CSV_FLOAT_FORMAT = "%.17g"


class FileHandler:
    """Read and write the laboratory's file formats"""

    SUPPORTED_CONFIG_EXTENSIONS = [".json", ".yaml", ".yml", ".cfg", ".txt"]

    # =====================================================================
    # KEY-VALUE CONFIG FILES
    # =====================================================================

    @staticmethod
    def load_file(path: PathLike, encoding: str = "utf-8") -> Dict:
        """
        Load a JSON or YAML (flat key-value) file

        Args:
            path: File path
            encoding: File encoding

        Returns:
            Parsed mapping

        Raises:
            ValueError: If the format is unsupported or the content is not a mapping
        """
        path = Path(path)
        ext = path.suffix.lower()
        if ext not in FileHandler.SUPPORTED_CONFIG_EXTENSIONS:
            raise ValueError(
                f"Unsupported file format: {ext}. "
                f"Supported formats: {', '.join(FileHandler.SUPPORTED_CONFIG_EXTENSIONS)}"
            )

        try:
            content = path.read_text(encoding=encoding)
        except OSError as e:
            logger.error("file_read_failed", filename=str(path), error=str(e))
            raise IOError(f"Failed to read file: {e}") from e

        try:
            data = json.loads(content) if ext == ".json" else yaml.safe_load(content)
        except (json.JSONDecodeError, yaml.YAMLError) as e:
            logger.error("config_parse_error", filename=str(path), error=str(e))
            raise ValueError(f"Malformed config file {path}: {e}") from e

        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ValueError(f"Config file {path} must hold key-value pairs")

        logger.info("config_file_loaded", filename=str(path), keys=len(data))
        return data

    @staticmethod
    def save_to_yaml(data: Dict, output_path: PathLike):
        """Write a mapping as block-style YAML, keys in insertion order"""
        try:
            with open(output_path, "w", encoding="utf-8", newline="\n") as f:
                yaml.safe_dump(data, f, allow_unicode=True, default_flow_style=False, sort_keys=False)
            logger.info("yaml_file_saved", path=str(output_path))
        except Exception as e:
            logger.error("yaml_save_failed", path=str(output_path), error=str(e))
            raise

    @staticmethod
    def save_to_json(data: Any, output_path: PathLike, indent: int = 2):
        try:
            with open(output_path, "w", encoding="utf-8", newline="\n") as f:
                json.dump(data, f, indent=indent, ensure_ascii=False)
            logger.info("json_file_saved", path=str(output_path))
        except Exception as e:
            logger.error("json_save_failed", path=str(output_path), error=str(e))
            raise

    @staticmethod
    def write_text(text: str, output_path: PathLike):
        with open(output_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)

    # =====================================================================
    # RAW TENSORS
    # =====================================================================

    @staticmethod
    def tensor_paths(path: PathLike) -> Tuple[Path, Path]:
        """(data, header) paths for a tensor stem; a trailing .bin is ignored"""
        path = Path(path)
        stem = path.with_suffix("") if path.suffix in (".bin", ".hdr") else path
        return stem.with_name(stem.name + ".bin"), stem.with_name(stem.name + ".hdr")

    @staticmethod
    def write_tensor(path: PathLike, arr: np.ndarray) -> Path:
        """
        Write little-endian float64 row-major data plus a sidecar header

        Returns:
            Path of the .bin file
        """
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        bin_path, hdr_path = FileHandler.tensor_paths(path)
        bin_path.write_bytes(arr.astype(TENSOR_DTYPE).tobytes(order="C"))
        shape = " ".join(str(n) for n in arr.shape)
        FileHandler.write_text(f"shape: {shape}\ncount: {arr.size}\ndtype: float64-le\n", hdr_path)
        LoggerSetup.log_file_operation("write_tensor", bin_path.name, "completed", shape=list(arr.shape))
        return bin_path

    @staticmethod
    def read_tensor(path: PathLike) -> np.ndarray:
        """
        Read a tensor written by write_tensor

        Raises:
            ValueError: If header and data disagree
        """
        bin_path, hdr_path = FileHandler.tensor_paths(path)
        header: Dict[str, str] = {}
        for line in hdr_path.read_text(encoding="utf-8").splitlines():
            if ":" in line:
                key, value = line.split(":", 1)
                header[key.strip()] = value.strip()

        shape = tuple(int(n) for n in header.get("shape", "").split())
        count = int(header.get("count", -1))
        if int(np.prod(shape)) != count:
            raise ValueError(f"{hdr_path.name}: shape {shape} does not match count {count}")

        data = np.frombuffer(bin_path.read_bytes(), dtype=TENSOR_DTYPE)
        if data.size != count:
            LoggerSetup.log_file_operation("read_tensor", bin_path.name, "failed", count=count, found=int(data.size))
            raise ValueError(f"{bin_path.name}: expected {count} values, found {data.size}")
        return data.astype(np.float64).reshape(shape)

    # =====================================================================
    # IMAGES
    # =====================================================================

    @staticmethod
    def to_uint8(img: np.ndarray) -> np.ndarray:
        return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)

    @staticmethod
    def write_image(path: PathLike, img: np.ndarray):
        """
        Write an image in [0,1] as 8-bit PGM (1 channel) or PPM (3 channels)

        Args:
            path: Output file
            img: (H,W), (1,H,W) or (3,H,W)
        """
        img = np.asarray(img, dtype=np.float64)
        if img.ndim == 3 and img.shape[0] == 1:
            img = img[0]
        if img.ndim == 2:
            pil = Image.fromarray(FileHandler.to_uint8(img))
        elif img.ndim == 3 and img.shape[0] == 3:
            pil = Image.fromarray(np.ascontiguousarray(FileHandler.to_uint8(img.transpose(1, 2, 0))))
        else:
            raise ValueError(f"Cannot write image of shape {img.shape}; expected (H,W), (1,H,W) or (3,H,W)")
        pil.save(path, format="PPM")
        LoggerSetup.log_file_operation("write_image", Path(path).name, "completed", shape=list(img.shape))

    @staticmethod
    def read_image(path: PathLike) -> np.ndarray:
        """Read a PGM/PPM as (C,H,W) float64 in [0,1]"""
        with Image.open(path) as pil:
            if pil.mode not in ("L", "RGB"):
                pil = pil.convert("RGB")
            arr = np.asarray(pil, dtype=np.float64) / 255.0
        if arr.ndim == 2:
            return arr[None, :, :]
        return arr.transpose(2, 0, 1).copy()

    @staticmethod
    def write_mask(path: PathLike, mask: np.ndarray):
        FileHandler.write_image(path, (np.asarray(mask) > 0.5).astype(np.float64))

    @staticmethod
    def read_mask(path: PathLike, threshold: int = 128) -> np.ndarray:
        """Read a PGM mask as (H,W) {0,1} float64, pixels >= threshold are 1"""
        with Image.open(path) as pil:
            raw = np.asarray(pil.convert("L"), dtype=np.int64)
        return (raw >= threshold).astype(np.float64)

    @staticmethod
    def write_depth_visual(path: PathLike, depth: np.ndarray) -> Tuple[float, float]:
        """
        Min-max normalized 8-bit PGM of a depth map

        Returns:
            (min, max) normalization constants
        """
        depth = np.asarray(depth, dtype=np.float64)
        lo, hi = float(depth.min()), float(depth.max())
        span = hi - lo
        norm = np.zeros_like(depth) if span == 0.0 else (depth - lo) / span
        FileHandler.write_image(path, norm)
        return lo, hi

    # =====================================================================
    # CSV
    # =====================================================================

    @staticmethod
    def write_csv(table: Union[pd.DataFrame, Sequence[Dict]], output_path: PathLike, columns: Optional[Sequence[str]] = None):
        """Write rows with 17-significant-digit floats and '\n' line endings"""
        df = table if isinstance(table, pd.DataFrame) else pd.DataFrame(list(table), columns=columns)
        df.to_csv(output_path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
        LoggerSetup.log_file_operation("write_csv", Path(output_path).name, "completed", rows=len(df))

    @staticmethod
    def read_csv(path: PathLike) -> pd.DataFrame:
        return pd.read_csv(path, float_precision="round_trip")
