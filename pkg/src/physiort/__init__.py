"""Real-time physiological signal acquisition, quality assessment and analysis.

Layers, lowest first:

    wire      serial frame grammar (encode/decode, resync)
    config    experiment and acquisition documents
    dsp       filters, peak detection, windowed metrics
    synth     synthetic PPG/EDA/RSP generators with ground truth
    sqa       1-D segmentation network for beat-quality bins
    store     CSV session files, crash-durable reads
    sync      multi-device start/stop triggering over TCP
    analysis  batch metrics, exclusion rules, method agreement
    runtime   live pipeline gluing the above together
    gateway   WebSocket fan-out for the browser console
"""

from .errors import PhysiortError

__all__ = ["PhysiortError", "__version__"]
__version__ = "0.1.0"
