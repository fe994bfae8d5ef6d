"""Python bindings for the xids flow classifier and attribution pipeline."""

try:
    from . import _xids as _ext
except ImportError:  # in-tree build: the extension sits outside the package
    import _xids as _ext

CLASSES = _ext.CLASSES
XidsError = _ext.XidsError
ConfigError = _ext.ConfigError
DataError = _ext.DataError
NumericError = _ext.NumericError
AuditError = _ext.AuditError
IoError = _ext.IoError

Model = _ext.Model
Pipeline = _ext.Pipeline

schema = _ext.schema
merge_label = _ext.merge_label
format_value = _ext.format_value
serialize = _ext.serialize
tokenize = _ext.tokenize
vocab = _ext.vocab
class_weights = _ext.class_weights
metrics = _ext.metrics
write_synthetic = _ext.write_synthetic

__all__ = [
    "CLASSES",
    "AuditError",
    "ConfigError",
    "DataError",
    "IoError",
    "Model",
    "NumericError",
    "Pipeline",
    "XidsError",
    "class_weights",
    "format_value",
    "merge_label",
    "metrics",
    "schema",
    "serialize",
    "tokenize",
    "vocab",
    "write_synthetic",
]
