//! JSON schemas of the file formats, for external validation.

use serde_json::{json, Value};

fn pose() -> Value {
    json!({
        "type": "object",
        "description": "Rigid transform target_from_source; quaternion (w, x, y, z), translation in meters.",
        "required": ["rotation_quat_wxyz", "translation_m"],
        "properties": {
            "rotation_quat_wxyz": { "type": "array", "items": { "type": "number" }, "minItems": 4, "maxItems": 4 },
            "translation_m": { "type": "array", "items": { "type": "number" }, "minItems": 3, "maxItems": 3 }
        }
    })
}

fn vec_n(n: usize) -> Value {
    json!({ "type": "array", "items": { "type": "number" }, "minItems": n, "maxItems": n })
}

fn named(field: &str, n: usize) -> Value {
    json!({
        "type": "object",
        "required": ["name", field],
        "properties": { "name": { "type": "string" }, field: vec_n(n) }
    })
}

fn chain() -> Value {
    json!({
        "type": "object",
        "description": "Serial chain. Link 0 is the base; link i is the frame after joint i. rpy is fixed-axis roll, pitch, yaw (R = Rz Ry Rx).",
        "required": ["name", "joints", "keypoints"],
        "additionalProperties": false,
        "properties": {
            "name": { "type": "string" },
            "notes": { "type": "string" },
            "joints": { "type": "array", "items": {
                "type": "object",
                "required": ["name", "kind"],
                "additionalProperties": false,
                "properties": {
                    "name": { "type": "string" },
                    "kind": { "enum": ["revolute", "prismatic", "fixed"] },
                    "origin": {
                        "type": "object",
                        "properties": { "xyz": vec_n(3), "rpy": vec_n(3) }
                    },
                    "axis": vec_n(3),
                    "limits": vec_n(2)
                }
            }},
            "keypoints": { "type": "array", "items": {
                "type": "object",
                "required": ["name", "link"],
                "additionalProperties": false,
                "properties": {
                    "name": { "type": "string" },
                    "link": { "type": "integer", "minimum": 0 },
                    "offset": vec_n(3)
                }
            }}
        }
    })
}

fn intrinsics() -> Value {
    json!({
        "type": "object",
        "description": "Pinhole camera; +x right, +y down, +z forward. Pixel bounds are [0, width) x [0, height).",
        "required": ["fx", "fy", "cx", "cy", "width", "height"],
        "properties": {
            "fx": { "type": "number", "exclusiveMinimum": 0 },
            "fy": { "type": "number", "exclusiveMinimum": 0 },
            "cx": { "type": "number" },
            "cy": { "type": "number" },
            "width": { "type": "integer", "minimum": 1 },
            "height": { "type": "integer", "minimum": 1 }
        }
    })
}

fn frame() -> Value {
    json!({
        "type": "object",
        "required": ["joint_config"],
        "properties": {
            "index": { "type": "integer", "minimum": 0 },
            "joint_config": { "type": "array", "items": { "type": "number" } },
            "gt_cam_from_base": pose(),
            "keypoints3d": { "type": "array", "items": named("xyz", 3) },
            "gt_pixels": { "type": "array", "items": named("pixel", 2) },
            "detections": { "type": "array", "items": named("pixel", 2) },
            "belief_maps": { "type": "string" }
        }
    })
}

fn dataset() -> Value {
    json!({
        "type": "object",
        "description": "Synthetic dataset. Camera shell: azimuth 0 is base +x, positive toward +y; elevation from the base xy-plane; the camera aims at the base origin.",
        "required": ["header", "frames"],
        "properties": {
            "header": {
                "type": "object",
                "required": ["chain", "intrinsics", "shell", "noise", "noise_label", "seed", "camera_mode"],
                "properties": {
                    "chain": { "type": "object", "properties": {
                        "name": { "type": "string" }, "path": { "type": "string" }, "sha256": { "type": "string" }
                    }},
                    "intrinsics": intrinsics(),
                    "shell": { "type": "object", "properties": {
                        "azimuth_deg": vec_n(2), "elevation_deg": vec_n(2), "distance_m": vec_n(2), "jitter_deg": { "type": "number" }
                    }},
                    "noise": { "type": "object", "properties": {
                        "pixel_sigma": { "type": "number" }, "dropout_prob": { "type": "number" },
                        "outlier_prob": { "type": "number" }, "outlier_radius": { "type": "number" }
                    }},
                    "noise_label": { "type": "string" },
                    "seed": { "type": "integer" },
                    "camera_mode": { "enum": ["static", "per-frame"] },
                    "belief_map_scale": { "enum": [1, 0.5, 0.25] }
                }
            },
            "frames": { "type": "array", "items": frame() }
        }
    })
}

fn pose_output() -> Value {
    let mut v = pose();
    let props = v["properties"].as_object_mut().expect("object");
    props.insert("reprojection_rmse_px".into(), json!({ "type": "number" }));
    props.insert("n_points".into(), json!({ "type": "integer" }));
    props.insert("frames_used".into(), json!({ "type": "integer" }));
    v["description"] = json!("cam_from_base estimate");
    v
}

fn handeye_samples() -> Value {
    json!({
        "type": "array",
        "items": {
            "type": "object",
            "required": ["base_from_hand", "cam_from_marker"],
            "properties": { "base_from_hand": pose(), "cam_from_marker": pose() }
        }
    })
}

fn bmap_sidecar() -> Value {
    json!({
        "type": "object",
        "description": "Sidecar of a BMAP file: magic \"BMAP\", u16 LE version (1), n, height, width, then n*height*width f32 LE values, keypoint-major, row-major. Map cell (x, y) is at full-resolution pixel (x, y) / alpha.",
        "required": ["keypoints", "alpha"],
        "properties": {
            "keypoints": { "type": "array", "items": { "type": "string" } },
            "alpha": { "enum": [1, 0.5, 0.25] }
        }
    })
}

fn curve() -> Value {
    json!({
        "type": "object",
        "required": ["thresholds", "fraction", "auc", "auc_max", "n_samples"],
        "properties": {
            "thresholds": { "type": "array", "items": { "type": "number" } },
            "fraction": { "type": "array", "items": { "type": "number", "minimum": 0, "maximum": 1 } },
            "auc": { "type": "number", "minimum": 0, "maximum": 1 },
            "auc_max": { "type": "number" },
            "n_samples": { "type": "integer" }
        }
    })
}

fn evaluation_report() -> Value {
    json!({
        "type": "object",
        "required": ["config", "n_frames", "pck", "add", "table"],
        "properties": {
            "config": { "type": "object", "properties": {
                "pck_thresholds_px": { "type": "array", "items": { "type": "number" } },
                "add_thresholds_mm": { "type": "array", "items": { "type": "number" } },
                "pck_auc_max_px": { "type": "number" },
                "add_auc_max_mm": { "type": "number" }
            }},
            "n_frames": { "type": "integer" },
            "n_keypoints_counted": { "type": "integer" },
            "pck": curve(),
            "add": curve(),
            "add_per_frame_mm": { "type": "array", "items": { "type": ["number", "null"] } },
            "table": { "type": "array", "items": {
                "type": "object",
                "properties": {
                    "method": { "type": "string" },
                    "columns": { "type": "array", "items": { "type": "string" } },
                    "values": { "type": "array", "items": { "type": "number" } }
                }
            }}
        }
    })
}

fn manifest() -> Value {
    let file =
        json!({ "type": "object", "properties": { "path": { "type": "string" }, "sha256": { "type": "string" } } });
    json!({
        "type": "object",
        "required": ["command", "tool_version", "config", "inputs", "outputs"],
        "properties": {
            "command": { "type": "string" },
            "tool_version": { "type": "string" },
            "seed": { "type": ["integer", "null"] },
            "config": { "type": "object" },
            "inputs": { "type": "array", "items": file },
            "outputs": { "type": "array", "items": file },
            "started_unix_s": { "type": "number" },
            "finished_unix_s": { "type": "number" }
        }
    })
}

pub const NAMES: [&str; 9] = [
    "chain",
    "intrinsics",
    "dataset",
    "frame",
    "pose",
    "handeye-samples",
    "bmap-sidecar",
    "evaluation-report",
    "manifest",
];

pub fn schema(name: &str) -> Option<Value> {
    let body = match name {
        "chain" => chain(),
        "intrinsics" => intrinsics(),
        "dataset" => dataset(),
        "frame" => frame(),
        "pose" => pose_output(),
        "handeye-samples" => handeye_samples(),
        "bmap-sidecar" => bmap_sidecar(),
        "evaluation-report" => evaluation_report(),
        "manifest" => manifest(),
        _ => return None,
    };
    let mut v = json!({ "$schema": "https://json-schema.org/draft/2020-12/schema", "title": name });
    v.as_object_mut()
        .expect("object")
        .extend(body.as_object().expect("object").clone());
    Some(v)
}

pub fn all() -> Value {
    Value::Object(
        NAMES
            .iter()
            .map(|n| (n.to_string(), schema(n).expect("known schema")))
            .collect(),
    )
}
