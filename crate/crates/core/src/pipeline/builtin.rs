use super::{FunctionContext, FunctionRegistry, Inputs, SinkRecord};
use crate::datapack::{DataPack, Payload, PayloadKind};
use crate::doc::{self, Doc, Value};
use crate::perception::{frame_to_doc, CAMERA_IMG_DATAPACK};
use crate::vehicle::{JointCommand, FRONT_LEFT_STEERING, FRONT_RIGHT_STEERING, REAR_LEFT_WHEEL, REAR_RIGHT_WHEEL};

pub const STATE_LOCATION_DATAPACK: &str = "state_location";
pub const ACTORS_DATAPACK: &str = "actors";

pub(super) fn register_all(r: &mut FunctionRegistry) {
    r.register("state_tf", &[("state_gazebo", PayloadKind::LinkState)], state_tf);
    r.register("motor_set_tf", &[("actors", PayloadKind::Doc)], motor_set_tf);
    r.register("camera_tf", &[("camera", PayloadKind::CameraFrame)], camera_tf);
    r.register(
        "detection_log_tf",
        &[("detection", PayloadKind::Detection)],
        detection_log_tf,
    );
}

fn input<'a>(inputs: &'a Inputs, keyword: &str) -> Result<&'a DataPack, String> {
    inputs
        .get(keyword)
        .ok_or_else(|| format!("input {keyword:?} not bound"))
}

/// Vehicle pose to the controller's `state_location` document. Planar only:
/// z is dropped.
pub fn state_tf(inputs: &Inputs, ctx: &mut FunctionContext) -> Result<Vec<DataPack>, String> {
    let dp = input(inputs, "state_gazebo")?;
    if dp.is_empty() {
        return Ok(vec![]);
    }
    let s = dp.link_state().map_err(|e| e.to_string())?;
    let mut d = Doc::new();
    d.insert("location_x".into(), Value::Float(s.pos[0]));
    d.insert("location_y".into(), Value::Float(s.pos[1]));
    for (k, v) in ["qtn_x", "qtn_y", "qtn_z", "qtn_w"].into_iter().zip(s.rot) {
        d.insert(k.into(), Value::Float(v));
    }
    Ok(vec![DataPack::new(
        STATE_LOCATION_DATAPACK,
        ctx.linked_engine.as_str(),
        Payload::Doc(d),
    )])
}

/// Controller `actors` document to the four joint commands.
pub fn motor_set_tf(inputs: &Inputs, ctx: &mut FunctionContext) -> Result<Vec<DataPack>, String> {
    let dp = input(inputs, "actors")?;
    if dp.is_empty() {
        return Ok(vec![]);
    }
    let actors = dp.doc().map_err(|e| e.to_string())?;
    let field = |k: &str| doc::get_f64(actors, k).ok_or_else(|| format!("actors has no numeric {k:?}"));
    let commands = [
        JointCommand::velocity(REAR_LEFT_WHEEL, field("linear_L")?),
        JointCommand::velocity(REAR_RIGHT_WHEEL, field("linear_R")?),
        JointCommand::position(FRONT_LEFT_STEERING, field("angular_L")?),
        JointCommand::position(FRONT_RIGHT_STEERING, field("angular_R")?),
    ];
    Ok(commands
        .into_iter()
        .map(|c| {
            DataPack::new(
                c.joint_name.clone(),
                ctx.linked_engine.as_str(),
                Payload::JointCommand(c),
            )
        })
        .collect())
}

/// Camera frame to the detector's `camera_img` document.
pub fn camera_tf(inputs: &Inputs, ctx: &mut FunctionContext) -> Result<Vec<DataPack>, String> {
    let dp = input(inputs, "camera")?;
    if dp.is_empty() {
        return Ok(vec![]);
    }
    let frame = dp.camera_frame().map_err(|e| e.to_string())?;
    Ok(vec![DataPack::new(
        CAMERA_IMG_DATAPACK,
        ctx.linked_engine.as_str(),
        Payload::Doc(frame_to_doc(frame)),
    )])
}

/// Logs the detector output (or its absence) for this step; routes nothing.
pub fn detection_log_tf(inputs: &Inputs, ctx: &mut FunctionContext) -> Result<Vec<DataPack>, String> {
    let dp = input(inputs, "detection")?;
    let detection = match dp.payload() {
        None => None,
        Some(_) => Some(dp.detection().map_err(|e| e.to_string())?.clone()),
    };
    ctx.records.push(SinkRecord::Detection {
        step: ctx.step_index,
        detection,
    });
    Ok(vec![])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc;
    use crate::perception::{frame_from_doc, render_frame, Detection};
    use crate::vehicle::{publish_link_state, TargetType, VehicleParams, VehicleState};

    fn one(keyword: &str, dp: DataPack) -> Inputs {
        Inputs::from([(keyword.to_owned(), dp)])
    }

    #[test]
    fn state_tf_copies_position_and_rotation() {
        let link = publish_link_state(&VehicleState::at(1.5, -2.0, 0.3), &VehicleParams::default());
        let inputs = one("state_gazebo", DataPack::new("l", "vehicle", Payload::LinkState(link)));
        let mut ctx = FunctionContext::new("car_ctl_engine", 0, 0);
        let out = state_tf(&inputs, &mut ctx).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].name(), "state_location");
        assert_eq!(out[0].engine_name(), "car_ctl_engine");
        let d = out[0].doc().unwrap();
        let keys: Vec<_> = d.keys().map(String::as_str).collect();
        assert_eq!(keys, ["location_x", "location_y", "qtn_w", "qtn_x", "qtn_y", "qtn_z"]);
        assert_eq!(doc::get_f64(d, "location_x"), Some(1.5));
        assert_eq!(doc::get_f64(d, "qtn_z"), Some(link.rot[2]));
        assert_eq!(doc::get_f64(d, "qtn_w"), Some(link.rot[3]));
    }

    #[test]
    fn motor_set_tf_emits_four_joint_commands() {
        let actors = doc! { "angular_L" => 0.2, "angular_R" => 0.19, "linear_L" => 13.0, "linear_R" => 13i64 };
        let inputs = one(
            "actors",
            DataPack::new("actors", "car_ctl_engine", Payload::Doc(actors)),
        );
        let out = motor_set_tf(&inputs, &mut FunctionContext::new("vehicle", 0, 0)).unwrap();
        let cmds: Vec<_> = out.iter().map(|dp| dp.joint_command().unwrap().clone()).collect();
        assert_eq!(cmds[0].joint_name, "smart_car_joint_plugin::rear_left_wheel_joint");
        assert_eq!(cmds[0].target_type, TargetType::Velocity);
        assert_eq!(cmds[1].target_value, 13.0);
        assert_eq!(cmds[2].joint_name, "smart_car_joint_plugin::front_left_steering_joint");
        assert_eq!(cmds[2].target_type, TargetType::Position);
        assert_eq!(cmds[3].target_value, 0.19);
        assert!(out.iter().all(|dp| dp.engine_name() == "vehicle"));
    }

    #[test]
    fn empty_inputs_route_nothing() {
        let mut ctx = FunctionContext::new("x", 0, 0);
        let empty = |k: &str, kind| one(k, DataPack::empty("n", "e", kind));
        assert!(state_tf(&empty("state_gazebo", PayloadKind::LinkState), &mut ctx)
            .unwrap()
            .is_empty());
        assert!(motor_set_tf(&empty("actors", PayloadKind::Doc), &mut ctx)
            .unwrap()
            .is_empty());
        assert!(camera_tf(&empty("camera", PayloadKind::CameraFrame), &mut ctx)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn camera_tf_passes_frame_through() {
        let frame = render_frame(3, 64, 32);
        let inputs = one(
            "camera",
            DataPack::new("smart_camera::camera", "camera", Payload::CameraFrame(frame.clone())),
        );
        let out = camera_tf(&inputs, &mut FunctionContext::new("yolo_detector", 0, 0)).unwrap();
        let d = out[0].doc().unwrap();
        assert_eq!(doc::get_f64(d, "c_imageHeight"), Some(32.0));
        assert_eq!(frame_from_doc(d), Some(frame));
    }

    #[test]
    fn detection_log_records_each_step() {
        let det = Detection {
            x_min: 0,
            y_min: 0,
            x_max: 91,
            y_max: 59,
            score: 1.0,
            label: "target".into(),
        };
        let mut ctx = FunctionContext::new("yolo_detector", 7, 0);
        let inputs = one(
            "detection",
            DataPack::new("detection", "yolo_detector", Payload::Detection(det.clone())),
        );
        assert!(detection_log_tf(&inputs, &mut ctx).unwrap().is_empty());
        let inputs = one(
            "detection",
            DataPack::empty("detection", "yolo_detector", PayloadKind::Detection),
        );
        detection_log_tf(&inputs, &mut ctx).unwrap();
        assert_eq!(
            ctx.records,
            [
                SinkRecord::Detection {
                    step: 7,
                    detection: Some(det)
                },
                SinkRecord::Detection {
                    step: 7,
                    detection: None
                },
            ]
        );
    }
}
