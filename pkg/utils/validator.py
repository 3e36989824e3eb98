"""
Config Validator Module
Validates attack configurations and model manifests against JSON schemas
"""

import json
from pathlib import Path
from typing import Dict, Optional, Tuple

import jsonschema

from utils.logger import logger


class ValidationError(Exception):
    """Custom exception for validation errors"""
    pass


class ConfigValidator:
    """Validates configuration mappings against the bundled schemas"""

    # Schema directory
    SCHEMA_DIR = Path(__file__).resolve().parent.parent / "schemas"

    # Schema mapping - maps config kind to schema filename
    SCHEMA_MAP = {
        "attack_config": "attack_config_schema.json",
        "model_manifest": "model_manifest_schema.json",
    }

    # Cache for loaded schemas
    _schema_cache: Dict[str, Dict] = {}

    @classmethod
    def load_schema(cls, schema_name: str) -> Dict:
        """
        Load JSON schema from file with caching

        Args:
            schema_name: Name of schema file

        Returns:
            Loaded schema dictionary
        """
        if schema_name in cls._schema_cache:
            return cls._schema_cache[schema_name]

        schema_path = cls.SCHEMA_DIR / schema_name
        if not schema_path.exists():
            raise FileNotFoundError(f"Schema not found: {schema_path}")

        try:
            with open(schema_path, "r", encoding="utf-8") as f:
                schema = json.load(f)
        except json.JSONDecodeError as e:
            logger.error("schema_parse_error", schema_name=schema_name, error=str(e))
            raise

        cls._schema_cache[schema_name] = schema
        logger.debug("schema_loaded", schema_name=schema_name)
        return schema

    @classmethod
    def validate(cls, data: Dict, kind: str, silent: bool = False) -> Tuple[bool, Optional[str]]:
        """
        Validate data against the schema registered for kind

        Args:
            data: Mapping to validate
            kind: 'attack_config' or 'model_manifest'
            silent: If True, return the error instead of raising

        Returns:
            Tuple of (is_valid, error_message)

        Raises:
            ValidationError: On invalid data unless silent
        """
        schema_filename = cls.SCHEMA_MAP.get(kind)
        if not schema_filename:
            error_msg = f"Unknown config kind: {kind}. Available: {', '.join(cls.SCHEMA_MAP)}"
            if not silent:
                raise ValidationError(error_msg)
            return False, error_msg

        schema = cls.load_schema(schema_filename)

        validator = jsonschema.Draft7Validator(schema)
        errors = sorted(validator.iter_errors(data), key=lambda e: [str(p) for p in e.path])
        if not errors:
            logger.debug("validation_success", kind=kind)
            return True, None

        error_msg = cls._format_validation_error(errors[0])
        logger.error("validation_failed", kind=kind, error=error_msg, path=list(errors[0].path))
        if not silent:
            raise ValidationError(error_msg)
        return False, error_msg

    @staticmethod
    def _format_validation_error(error: jsonschema.ValidationError) -> str:
        """
        Format validation error for a one-line diagnostic

        Args:
            error: JSONSchema validation error

        Returns:
            Formatted error message
        """
        path = ".".join(str(p) for p in error.path) if error.path else "root"
        return f"Validation error at '{path}': {error.message} (rule: {error.validator})"
