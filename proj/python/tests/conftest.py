import os
import sys

# ctest points this at the staged in-tree build. An editable install hooks
# imports through its own meta-path finder, which would otherwise win.
_stage = os.environ.get("OCSVM_CPD_PYTHONPATH")
if _stage:
    sys.meta_path[:] = [f for f in sys.meta_path if type(f).__name__ != "ScikitBuildRedirectingFinder"]
    sys.path.insert(0, _stage)
    import ocsvm_cpd

    assert ocsvm_cpd.__file__.startswith(_stage), ocsvm_cpd.__file__
