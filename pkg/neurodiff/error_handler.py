import json
import logging
import time
import traceback
from datetime import datetime, timezone
from enum import Enum
from functools import wraps
from typing import Any, Dict, Optional, Tuple, Type

from .config import MAX_RETRIES, RETRY_DELAY

logger = logging.getLogger(__name__)


class ErrorCode(Enum):
    # Cipher Errors (1100-1199)
    INVALID_ROUNDS = 1100
    INVALID_KEY = 1101
    INVALID_BLOCK = 1102
    UNKNOWN_CIPHER = 1103

    # Differential Errors (1200-1299)
    ZERO_DIFFERENTIAL = 1200
    DUPLICATE_DIFFERENTIAL = 1201
    INVALID_SHIFT = 1202
    TOO_FEW_CLASSES = 1203

    # Dataset Errors (1300-1399)
    MALFORMED_DATASET = 1300
    UNBALANCED_LABELS = 1301
    INVALID_SPLIT = 1302
    INSUFFICIENT_SAMPLES = 1303

    # Model File Errors (1400-1499)
    BAD_MAGIC = 1400
    VERSION_MISMATCH = 1401
    TRUNCATED_FILE = 1402
    CHECKSUM_FAILED = 1403

    # Training Errors (1500-1599)
    NON_FINITE_LOSS = 1500
    SHAPE_MISMATCH = 1501
    INVALID_ARCH = 1502

    # Oracle Errors (1600-1699)
    ORACLE_FAILURE = 1600
    EMPTY_QUERY = 1601

    # Configuration Errors (1700-1799)
    INVALID_CONFIG = 1700

    # Known-answer Errors (1800-1899)
    KAT_MISMATCH = 1800

    # System Errors (1900-1999)
    INTERNAL_ERROR = 1900


class NeurodiffError(Exception):
    """Base exception carrying an error code and timestamp"""

    default_code = ErrorCode.INTERNAL_ERROR

    def __init__(self, detail: str, error_code: Optional[ErrorCode] = None):
        self.error_code = error_code or self.default_code
        self.detail = detail
        self.timestamp = datetime.now(timezone.utc).isoformat()
        super().__init__(detail)

        logger.debug(f"Error {self.error_code.value}: {detail}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'error_code': self.error_code.value,
            'type': self.__class__.__name__,
            'message': self.detail,
            'timestamp': self.timestamp
        }


class RoundRangeError(NeurodiffError, ValueError):
    default_code = ErrorCode.INVALID_ROUNDS


class CipherError(NeurodiffError, ValueError):
    default_code = ErrorCode.UNKNOWN_CIPHER


class DifferentialError(NeurodiffError, ValueError):
    default_code = ErrorCode.ZERO_DIFFERENTIAL


class DatasetError(NeurodiffError, ValueError):
    default_code = ErrorCode.MALFORMED_DATASET


class ModelFileError(NeurodiffError):
    default_code = ErrorCode.BAD_MAGIC


class ModelVersionError(ModelFileError):
    default_code = ErrorCode.VERSION_MISMATCH


class ModelTruncatedError(ModelFileError):
    default_code = ErrorCode.TRUNCATED_FILE


class ModelChecksumError(ModelFileError):
    default_code = ErrorCode.CHECKSUM_FAILED


class TrainingDivergedError(NeurodiffError):
    default_code = ErrorCode.NON_FINITE_LOSS


class ShapeError(NeurodiffError, ValueError):
    default_code = ErrorCode.SHAPE_MISMATCH


class OracleError(NeurodiffError):
    default_code = ErrorCode.ORACLE_FAILURE


class ConfigError(NeurodiffError, ValueError):
    default_code = ErrorCode.INVALID_CONFIG


class KatFailure(NeurodiffError):
    default_code = ErrorCode.KAT_MISMATCH


def retry_on_error(
    retries: int = MAX_RETRIES,
    exceptions: Tuple[Type[BaseException], ...] = (OracleError,),
    delay: float = RETRY_DELAY
):
    """Decorator retrying a call that raises one of `exceptions`"""
    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            attempt = 0
            while True:
                try:
                    return func(*args, **kwargs)
                except exceptions as e:
                    attempt += 1
                    if attempt >= retries:
                        logger.error(f"Failed to execute {func.__name__} after {retries} attempts: {str(e)}")
                        raise
                    logger.warning(f"Error in {func.__name__}, attempt {attempt}/{retries}: {str(e)}")
                    time.sleep(delay * attempt)
        return wrapper
    return decorator


class ErrorHandler:
    def __init__(self):
        self.error_counts: Dict[ErrorCode, int] = {code: 0 for code in ErrorCode}
        self.last_errors: Dict[ErrorCode, str] = {}

    def classify(self, error: BaseException) -> ErrorCode:
        if isinstance(error, NeurodiffError):
            return error.error_code
        if isinstance(error, FloatingPointError):
            return ErrorCode.NON_FINITE_LOSS
        return ErrorCode.INTERNAL_ERROR

    def describe(self, error: BaseException, context: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """Structured failure record for a caught exception"""
        code = self.classify(error)
        self.error_counts[code] += 1
        self.last_errors[code] = datetime.now(timezone.utc).isoformat()

        record = {
            'error_code': code.value,
            'type': error.__class__.__name__,
            'message': str(error)
        }
        if context:
            record['context'] = context
        return record

    def log_error(self, error: BaseException, context: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        record = self.describe(error, context)
        record['count'] = self.error_counts[self.classify(error)]
        logger.error(f"Error details: {json.dumps(record, default=str)}")
        if not isinstance(error, NeurodiffError):
            logger.debug(''.join(traceback.format_exception(type(error), error, error.__traceback__)))
        return record


# Global error handler instance
error_handler = ErrorHandler()
