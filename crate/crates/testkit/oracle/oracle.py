"""Batch ONNX oracle: checker, strict shape inference and onnxruntime.

Reads {"jobs": [...]} on stdin and writes {"results": [...]} on stdout.
Job fields:
  model   base64 ONNX bytes
  run     optional {input_name: {"dims": [...], "data": [...]}} evaluated with onnxruntime
"""

import base64
import json
import sys


def dims_of(value_info):
    t = value_info.type.tensor_type
    if not t.HasField("shape"):
        return None
    out = []
    for d in t.shape.dim:
        if d.HasField("dim_value"):
            out.append(d.dim_value)
        elif d.HasField("dim_param"):
            out.append(d.dim_param)
        else:
            out.append(None)
    return out


def strip_shapes(model):
    """Copy with declared intermediate/output shapes removed, so inference is independent."""
    import onnx

    m = onnx.ModelProto()
    m.CopyFrom(model)
    del m.graph.value_info[:]
    for o in m.graph.output:
        o.type.tensor_type.ClearField("shape")
    return m


def handle(job):
    import onnx
    import onnx.checker
    import onnx.shape_inference

    result = {"ok": True}
    raw = base64.b64decode(job["model"])
    model = onnx.load_from_string(raw)
    try:
        onnx.checker.check_model(model, full_check=True)
    except Exception as e:  # noqa: BLE001
        return {"ok": False, "stage": "checker", "error": str(e)}

    try:
        inferred = onnx.shape_inference.infer_shapes(
            strip_shapes(model), check_type=True, strict_mode=True, data_prop=True
        )
    except Exception as e:  # noqa: BLE001
        return {"ok": False, "stage": "shape_inference", "error": str(e)}

    shapes = {}
    for vi in list(inferred.graph.value_info) + list(inferred.graph.output):
        shapes[vi.name] = dims_of(vi)
    result["shapes"] = shapes
    result["outputs"] = [o.name for o in inferred.graph.output]
    result["op_types"] = [n.op_type for n in model.graph.node]

    if job.get("run") is not None:
        import numpy as np
        import onnxruntime as ort

        opts = ort.SessionOptions()
        opts.graph_optimization_level = ort.GraphOptimizationLevel.ORT_DISABLE_ALL
        opts.intra_op_num_threads = 1
        try:
            sess = ort.InferenceSession(raw, opts, providers=["CPUExecutionProvider"])
            feeds = {
                name: np.asarray(v["data"], dtype=np.float32).reshape(v["dims"])
                for name, v in job["run"].items()
            }
            values = sess.run(None, feeds)
        except Exception as e:  # noqa: BLE001
            return {"ok": False, "stage": "runtime", "error": str(e)}
        result["values"] = {
            o.name: {"dims": list(v.shape), "data": [float(x) for x in v.reshape(-1)]}
            for o, v in zip(sess.get_outputs(), values)
        }
    return result


def main():
    request = json.load(sys.stdin)
    results = []
    for job in request["jobs"]:
        try:
            results.append(handle(job))
        except Exception as e:  # noqa: BLE001
            results.append({"ok": False, "stage": "load", "error": str(e)})
    json.dump({"results": results}, sys.stdout)


if __name__ == "__main__":
    main()
