"""Day-to-night car-detection pipeline toolkit.

Builds day/night detection datasets from driving-scene labels, generates an
annotated fake-night dataset via pluggable image translators, evaluates
detectors with VOC-2012 interpolated mAP, and orchestrates multi-seed
experiments with statistical comparison and chart reports.
"""

__version__ = "0.1.0"
