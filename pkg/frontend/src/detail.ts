/**
 * Photo detail: SVG overlay viewer + feedback form.
 *
 * The overlay draws exactly what the API returns — boxes, the six wheel
 * keypoints, and measurement segments labeled with their millimeter lengths
 * — in photo coordinates on a correctly sized viewBox. Fields the pipeline
 * left absent simply do not render; that is normal, not an error.
 */

import type { Overlay, FeedbackReason } from "./types.js";
import { FEEDBACK_REASONS } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export interface DetailCallbacks {
  onSubmitFeedback: (reason: FeedbackReason, note: string) => Promise<void>;
  onBack: () => void;
}

function svgEl(name: string, attrs: Record<string, string | number>): SVGElement {
  const el = document.createElementNS(SVG_NS, name);
  for (const [key, value] of Object.entries(attrs)) {
    el.setAttribute(key, String(value));
  }
  return el;
}

export function renderOverlaySvg(overlay: Overlay): SVGElement {
  const svg = svgEl("svg", {
    viewBox: `0 0 ${overlay.width_px} ${overlay.height_px}`,
    class: "overlay",
    role: "img",
  });
  for (const car of overlay.cars) {
    const group = svgEl("g", { class: "car" });
    const b = car.car_box;
    group.append(
      svgEl("rect", {
        x: b.x_min,
        y: b.y_min,
        width: b.x_max - b.x_min,
        height: b.y_max - b.y_min,
        class: "car-box",
      }),
    );
    if (car.number) {
      const label = svgEl("text", { x: b.x_min + 4, y: b.y_min - 6, class: "car-label" });
      label.textContent = `#${car.number}${car.team_assignment ? ` (team ${car.team_assignment})` : ""}`;
      group.append(label);
    }
    for (const wheel of car.wheel_keypoints) {
      for (const [name, kp] of Object.entries(wheel)) {
        if (!kp.visible) continue;
        group.append(
          svgEl("circle", { cx: kp.x, cy: kp.y, r: 3, class: `keypoint keypoint-${name}` }),
        );
      }
    }
    for (const m of car.measurements) {
      const [[x1, y1], [x2, y2]] = m.endpoints;
      group.append(
        svgEl("line", { x1, y1, x2, y2, class: `measurement measurement-${m.kind}` }),
      );
      const label = svgEl("text", {
        x: (x1 + x2) / 2,
        y: (y1 + y2) / 2 - 8,
        class: "measurement-label",
      });
      label.textContent = `${m.kind.replace("_", " ")}: ${m.length_mm.toFixed(1)} mm`;
      group.append(label);
    }
    svg.append(group);
  }
  return svg;
}

function feedbackForm(callbacks: DetailCallbacks): HTMLElement {
  const form = document.createElement("form");
  form.className = "feedback-form";

  const reason = document.createElement("select");
  reason.name = "reason";
  for (const value of FEEDBACK_REASONS) {
    const option = document.createElement("option");
    option.value = value;
    option.textContent = value.replace(/_/g, " ");
    reason.append(option);
  }

  const note = document.createElement("textarea");
  note.name = "note";
  note.placeholder = "what looks wrong?";

  const submit = document.createElement("button");
  submit.type = "submit";
  submit.textContent = "submit feedback";

  const confirmation = document.createElement("p");
  confirmation.className = "feedback-confirmation";
  confirmation.hidden = true;

  form.append(reason, note, submit, confirmation);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    submit.disabled = true;
    callbacks
      .onSubmitFeedback(reason.value as FeedbackReason, note.value)
      .then(() => {
        confirmation.textContent = "Feedback recorded — thank you.";
        confirmation.hidden = false;
      })
      .catch((error: unknown) => {
        confirmation.textContent = `Could not submit feedback: ${String(error)}`;
        confirmation.hidden = false;
      })
      .finally(() => {
        submit.disabled = false;
      });
  });
  return form;
}

export function renderPhotoDetail(overlay: Overlay, callbacks: DetailCallbacks): HTMLElement {
  const root = document.createElement("section");
  root.className = "photo-detail";

  const back = document.createElement("button");
  back.className = "back";
  back.textContent = "← back to gallery";
  back.addEventListener("click", () => callbacks.onBack());
  root.append(back);

  const heading = document.createElement("h2");
  heading.textContent = overlay.photo_id;
  root.append(heading);

  root.append(renderOverlaySvg(overlay));

  const facts = document.createElement("dl");
  facts.className = "car-facts";
  overlay.cars.forEach((car, index) => {
    const term = document.createElement("dt");
    term.textContent = `car ${index + 1}`;
    const detail = document.createElement("dd");
    const parts = [
      car.number ? `#${car.number}` : "number not read",
      car.team_assignment ? `team ${car.team_assignment}` : "team unassigned",
      car.orientation ?? "orientation unknown",
      car.manufacturer ?? "manufacturer unknown",
    ];
    if (car.measurements.length === 0) {
      parts.push("no measurements (not a side view or wheels not resolved)");
    }
    detail.textContent = parts.join(" · ");
    facts.append(term, detail);
  });
  root.append(facts);

  root.append(feedbackForm(callbacks));
  return root;
}
