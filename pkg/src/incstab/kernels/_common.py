"""Types shared by both kernel backends."""
from . import opcodes as oc


class KernelError(Exception):
    """Raised by a kernel; ``instr`` indexes the failing instruction, ``point`` the batch row."""

    def __init__(self, code, instr, point=None):
        self.code = code
        self.instr = instr
        self.point = point
        super().__init__(oc.REASONS.get(code, f"kernel error {code}"))

    @property
    def reason(self):
        return oc.REASONS.get(self.code, f"kernel error {self.code}")
