"""
Attack-side exceptions
"""


class VictimError(Exception):
    """Invalid victim geometry, mask or scene"""
    pass


class SaliencyError(Exception):
    """Salient region selection cannot proceed"""
    pass


class PipelineError(Exception):
    """End-to-end attack orchestration failure"""
    pass


class ReportError(Exception):
    """Report cannot be written or loaded"""
    pass
