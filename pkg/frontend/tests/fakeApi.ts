/**
 * In-memory fake of the trackside API for tests.
 *
 * Implements the documented contract: conjunctive annotation-level filters,
 * stable photo-id ordering with pagination, idempotent feedback per
 * (photo, reason), and overlay payloads derived from the stored records.
 */

import type {
  CarAnnotation,
  Orientation,
  PhotoPage,
  PhotoRecord,
  TeamSnapshot,
} from "../src/types.js";
import { ORIENTATIONS } from "../src/types.js";

export interface FakeBackend {
  fetch: (input: string, init?: RequestInit) => Promise<Response>;
  photos: PhotoRecord[];
  feedbackCount: () => number;
  requests: string[];
  failNext: (times: number) => void;
}

function annotation(partial: Partial<CarAnnotation>): CarAnnotation {
  return {
    car_box: { x_min: 10, y_min: 10, x_max: 200, y_max: 120 },
    car_score: 1.0,
    number: null,
    number_confidence: null,
    number_off_roster: false,
    manufacturer: null,
    orientation: null,
    team_assignment: null,
    embedding_ref: null,
    measurements: [],
    wheel_keypoints: [],
    ...partial,
  };
}

/** Two teams, all 8 orientations, one photo with two cars, one no-car photo. */
export function fixturePhotos(eventId = "e1"): PhotoRecord[] {
  const photos: PhotoRecord[] = [];
  const teams = ["11", "43"];
  const brands = ["chevrolet", "ford"];
  ORIENTATIONS.forEach((orientation, index) => {
    const team = teams[index % 2];
    const withMeasurements = orientation === "left" || orientation === "right";
    photos.push({
      photo_id: `ph${String(index).padStart(3, "0")}`,
      event_id: eventId,
      uri: `/photos/ph${index}.png`,
      width_px: 1600,
      height_px: 1200,
      captured_at: null,
      status: "processed",
      annotations: [
        annotation({
          number: team,
          number_confidence: 1.0,
          team_assignment: team,
          orientation,
          manufacturer: brands[index % 2],
          measurements: withMeasurements
            ? [
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
              ]
            : [],
          wheel_keypoints: withMeasurements
            ? [
                {
                  top: { x: 300, y: 650, visible: true },
                  right: { x: 350, y: 700, visible: true },
                  bottom: { x: 300, y: 750, visible: true },
                  left: { x: 250, y: 700, visible: true },
                  center: { x: 300, y: 700, visible: true },
                  ground_contact: { x: 300, y: 770, visible: false },
                },
              ]
            : [],
        }),
      ],
    });
  });
  // a two-car photo: front + rear, different teams
  photos.push({
    photo_id: "ph100",
    event_id: eventId,
    uri: "/photos/ph100.png",
    width_px: 1600,
    height_px: 1200,
    captured_at: null,
    status: "processed",
    annotations: [
      annotation({ number: "11", team_assignment: "11", orientation: "front",
                   manufacturer: "chevrolet" }),
      annotation({ number: "43", team_assignment: "43", orientation: "rear",
                   manufacturer: "ford" }),
    ],
  });
  photos.push({
    photo_id: "ph101",
    event_id: eventId,
    uri: "/photos/ph101.png",
    width_px: 1600,
    height_px: 1200,
    captured_at: null,
    status: "no_car",
    annotations: [],
  });
  return photos;
}

export function expectedSubset(
  photos: PhotoRecord[],
  filters: Partial<Record<"number" | "team" | "orientation" | "manufacturer", string>>,
): string[] {
  const ids = photos
    .filter((photo) =>
      photo.annotations.some(
        (a) =>
          (!filters.number || a.number === filters.number) &&
          (!filters.team || a.team_assignment === filters.team) &&
          (!filters.orientation || a.orientation === filters.orientation) &&
          (!filters.manufacturer || a.manufacturer === filters.manufacturer),
      ),
    )
    .map((p) => p.photo_id);
  return ids.sort();
}

export function makeBackend(eventId = "e1"): FakeBackend {
  const photos = fixturePhotos(eventId);
  const feedback = new Map<string, { reason: string; note: string }>();
  const requests: string[] = [];
  let failures = 0;

  const json = (body: unknown, status = 200): Response =>
    new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });

  const teamSnapshot = (): TeamSnapshot => ({
    event_id: eventId,
    config: {},
    teams: {
      "11": { centroid: [1, 0], reference_count: 12, finalized: true },
      "43": { centroid: [0, 1], reference_count: 4, finalized: false },
    },
  });

  const summary = () => ({
    event_id: eventId,
    name: "Fixture 500",
    series: "test",
    date: "2024-06-01",
    photo_counts: {
      pending: 0,
      processed: photos.filter((p) => p.status === "processed").length,
      no_car: photos.filter((p) => p.status === "no_car").length,
      failed: 0,
    },
    total_photos: photos.length,
    feedback_count: feedback.size,
  });

  async function handle(input: string, init?: RequestInit): Promise<Response> {
    requests.push(input);
    if (failures > 0) {
      failures -= 1;
      throw new TypeError("fetch failed (simulated outage)");
    }
    const url = new URL(input, "http://test.local");
    const parts = url.pathname.split("/").filter(Boolean);

    if (url.pathname === "/events" && (!init || !init.method)) {
      return json({ events: [{ event_id: eventId, name: "Fixture 500",
                               series: "test", date: "2024-06-01" }] });
    }
    if (parts[0] === "events" && parts.length === 2) {
      if (parts[1] !== eventId) return json({ detail: "unknown event" }, 404);
      return json(summary());
    }
    if (parts[0] === "events" && parts[2] === "photos") {
      if (parts[1] !== eventId) return json({ detail: "unknown event" }, 404);
      const orientation = url.searchParams.get("orientation") ?? undefined;
      if (orientation && !(ORIENTATIONS as readonly string[]).includes(orientation)) {
        return json({ detail: `malformed filter: orientation=${orientation}` }, 400);
      }
      const filters = {
        number: url.searchParams.get("number") ?? undefined,
        team: url.searchParams.get("team") ?? undefined,
        orientation: orientation as Orientation | undefined,
        manufacturer: url.searchParams.get("manufacturer") ?? undefined,
      };
      const status = url.searchParams.get("status") ?? undefined;
      const hasAnnotationFilter = Boolean(
        filters.number || filters.team || filters.orientation || filters.manufacturer,
      );
      const matches = photos
        .filter((photo) => {
          if (status && photo.status !== status) return false;
          if (!hasAnnotationFilter) return true;
          return photo.annotations.some(
            (a) =>
              (!filters.number || a.number === filters.number) &&
              (!filters.team || a.team_assignment === filters.team) &&
              (!filters.orientation || a.orientation === filters.orientation) &&
              (!filters.manufacturer || a.manufacturer === filters.manufacturer),
          );
        })
        .sort((a, b) => a.photo_id.localeCompare(b.photo_id));
      const page = Number(url.searchParams.get("page") ?? "1");
      const pageSize = Number(url.searchParams.get("page_size") ?? "50");
      const start = (page - 1) * pageSize;
      const body: PhotoPage = {
        items: matches.slice(start, start + pageSize),
        page,
        page_size: pageSize,
        total: matches.length,
        pages: matches.length ? Math.ceil(matches.length / pageSize) : 0,
      };
      return json(body);
    }
    if (parts[0] === "teams") {
      return json(teamSnapshot());
    }
    if (parts[0] === "photos" && parts[2] === "overlay") {
      const photo = photos.find((p) => p.photo_id === parts[1]);
      if (!photo) return json({ detail: "unknown photo" }, 404);
      return json({
        photo_id: photo.photo_id,
        width_px: photo.width_px,
        height_px: photo.height_px,
        status: photo.status,
        cars: photo.annotations.map((a) => ({
          car_box: a.car_box,
          number: a.number,
          team_assignment: a.team_assignment,
          orientation: a.orientation,
          manufacturer: a.manufacturer,
          wheel_keypoints: a.wheel_keypoints,
          measurements: a.measurements,
        })),
      });
    }
    if (parts[0] === "photos" && parts[2] === "feedback" && init?.method === "POST") {
      const photo = photos.find((p) => p.photo_id === parts[1]);
      if (!photo) return json({ detail: "unknown photo" }, 404);
      const body = JSON.parse(String(init.body)) as { reason: string; note?: string };
      const key = `${parts[1]}::${body.reason}`;
      const existed = feedback.has(key);
      if (!existed) feedback.set(key, { reason: body.reason, note: body.note ?? "" });
      const stored = feedback.get(key)!;
      return json(
        {
          photo_id: parts[1],
          submitted_at: "2024-06-01T10:00:00Z",
          reason: stored.reason,
          note: stored.note,
          exported_to_testset: false,
        },
        existed ? 200 : 201,
      );
    }
    if (parts[0] === "photos" && parts.length === 2) {
      const photo = photos.find((p) => p.photo_id === parts[1]);
      if (!photo) return json({ detail: "unknown photo" }, 404);
      return json(photo);
    }
    return json({ detail: `unhandled: ${url.pathname}` }, 404);
  }

  return {
    fetch: handle,
    photos,
    feedbackCount: () => feedback.size,
    requests,
    failNext: (times) => {
      failures = times;
    },
  };
}
