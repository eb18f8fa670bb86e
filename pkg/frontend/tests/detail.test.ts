import { describe, expect, it, vi } from "vitest";

import { renderOverlaySvg, renderPhotoDetail } from "../src/detail.js";
import type { Overlay } from "../src/types.js";

function sideViewOverlay(): Overlay {
  return {
    photo_id: "ph006",
    width_px: 1600,
    height_px: 1200,
    status: "processed",
    cars: [
      {
        car_box: { x_min: 100, y_min: 400, x_max: 900, y_max: 800 },
        number: "43",
        team_assignment: "43",
        orientation: "left",
        manufacturer: "chevrolet",
        wheel_keypoints: [
          {
            top: { x: 300, y: 650, visible: true },
            right: { x: 350, y: 700, visible: true },
            bottom: { x: 300, y: 750, visible: true },
            left: { x: 250, y: 700, visible: true },
            center: { x: 300, y: 700, visible: true },
            ground_contact: { x: 300, y: 770, visible: false },
          },
          {
            top: { x: 700, y: 650, visible: true },
            right: { x: 750, y: 700, visible: true },
            bottom: { x: 700, y: 750, visible: true },
            left: { x: 650, y: 700, visible: true },
            center: { x: 700, y: 700, visible: true },
            ground_contact: { x: 700, y: 770, visible: true },
          },
        ],
        measurements: [
          {
            kind: "center_line",
            length_mm: 2794.0,
            length_px: 400.0,
            scale_mm_per_px: 6.985,
            wheel_ids: [0, 1],
            endpoints: [
              [300, 700],
              [700, 700],
            ],
          },
          {
            kind: "ground_line",
            length_mm: 2794.0,
            length_px: 400.0,
            scale_mm_per_px: 6.985,
            wheel_ids: [0, 1],
            endpoints: [
              [300, 770],
              [700, 770],
            ],
          },
        ],
      },
    ],
  };
}

describe("renderOverlaySvg", () => {
  it("draws boxes, visible keypoints, and labeled measurement lines", () => {
    const svg = renderOverlaySvg(sideViewOverlay());
    expect(svg.getAttribute("viewBox")).toBe("0 0 1600 1200");
    expect(svg.querySelectorAll("rect.car-box")).toHaveLength(1);
    // 6 + 6 keypoints, minus one invisible ground contact
    expect(svg.querySelectorAll("circle.keypoint")).toHaveLength(11);
    const lines = svg.querySelectorAll("line.measurement");
    expect(lines).toHaveLength(2);
    const labels = [...svg.querySelectorAll("text.measurement-label")].map(
      (t) => t.textContent,
    );
    // the mm value comes verbatim from the API payload
    expect(labels).toContain("center line: 2794.0 mm");
    expect(labels).toContain("ground line: 2794.0 mm");
  });

  it("renders nothing measurement-related when the API sent none", () => {
    const overlay = sideViewOverlay();
    overlay.cars[0].measurements = [];
    overlay.cars[0].wheel_keypoints = [];
    const svg = renderOverlaySvg(overlay);
    expect(svg.querySelectorAll("line.measurement")).toHaveLength(0);
    expect(svg.querySelectorAll("circle.keypoint")).toHaveLength(0);
    expect(svg.querySelectorAll("rect.car-box")).toHaveLength(1);
  });
});

describe("renderPhotoDetail", () => {
  it("absent fields render as notes, not errors", () => {
    const overlay = sideViewOverlay();
    overlay.cars[0].measurements = [];
    overlay.cars[0].number = null;
    overlay.cars[0].team_assignment = null;
    const el = renderPhotoDetail(overlay, {
      onBack: () => {},
      onSubmitFeedback: async () => {},
    });
    const facts = el.querySelector(".car-facts")?.textContent ?? "";
    expect(facts).toContain("number not read");
    expect(facts).toContain("team unassigned");
    expect(facts).toContain("no measurements");
  });

  it("submits feedback and shows the confirmation", async () => {
    const onSubmitFeedback = vi.fn().mockResolvedValue(undefined);
    const el = renderPhotoDetail(sideViewOverlay(), {
      onBack: () => {},
      onSubmitFeedback,
    });
    const form = el.querySelector("form.feedback-form") as HTMLFormElement;
    (form.querySelector("select") as HTMLSelectElement).value = "wrong_number";
    (form.querySelector("textarea") as HTMLTextAreaElement).value = "digit misread";
    form.dispatchEvent(new Event("submit"));
    await vi.waitFor(() => {
      const confirmation = form.querySelector(".feedback-confirmation") as HTMLElement;
      expect(confirmation.hidden).toBe(false);
      expect(confirmation.textContent).toContain("Feedback recorded");
    });
    expect(onSubmitFeedback).toHaveBeenCalledWith("wrong_number", "digit misread");
  });

  it("duplicate submission still reports success (idempotent backend)", async () => {
    const onSubmitFeedback = vi.fn().mockResolvedValue(undefined);
    const el = renderPhotoDetail(sideViewOverlay(), {
      onBack: () => {},
      onSubmitFeedback,
    });
    const form = el.querySelector("form.feedback-form") as HTMLFormElement;
    form.dispatchEvent(new Event("submit"));
    form.dispatchEvent(new Event("submit"));
    await vi.waitFor(() => {
      expect(onSubmitFeedback).toHaveBeenCalledTimes(2);
      const confirmation = form.querySelector(".feedback-confirmation") as HTMLElement;
      expect(confirmation.textContent).toContain("Feedback recorded");
    });
  });

  it("shows the failure message when the POST fails", async () => {
    const el = renderPhotoDetail(sideViewOverlay(), {
      onBack: () => {},
      onSubmitFeedback: vi.fn().mockRejectedValue(new Error("boom")),
    });
    const form = el.querySelector("form.feedback-form") as HTMLFormElement;
    form.dispatchEvent(new Event("submit"));
    await vi.waitFor(() => {
      const confirmation = form.querySelector(".feedback-confirmation") as HTMLElement;
      expect(confirmation.textContent).toContain("Could not submit feedback");
    });
  });

  it("back button invokes the callback", () => {
    const onBack = vi.fn();
    const el = renderPhotoDetail(sideViewOverlay(), {
      onBack,
      onSubmitFeedback: async () => {},
    });
    (el.querySelector("button.back") as HTMLButtonElement).click();
    expect(onBack).toHaveBeenCalled();
  });
});
