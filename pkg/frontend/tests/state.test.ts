import { describe, expect, it } from "vitest";

import {
  DEFAULT_PAGE_SIZE,
  defaultFilters,
  filtersToQuery,
  parseFilters,
  parseHash,
  routeToHash,
  withFilter,
} from "../src/state.js";
import type { GalleryRoute } from "../src/state.js";

describe("filters <-> query", () => {
  it("round-trips all filters", () => {
    const filters = {
      number: "43",
      team: "11",
      orientation: "front_right",
      manufacturer: "ford",
      status: "processed",
      page: 3,
      pageSize: 12,
    };
    expect(parseFilters(filtersToQuery(filters))).toEqual(filters);
  });

  it("defaults stay out of the query string", () => {
    expect(filtersToQuery(defaultFilters())).toBe("");
    const parsed = parseFilters("");
    expect(parsed.page).toBe(1);
    expect(parsed.pageSize).toBe(DEFAULT_PAGE_SIZE);
  });

  it("ignores malformed paging values", () => {
    const parsed = parseFilters("?page=-2&page_size=zero");
    expect(parsed.page).toBe(1);
    expect(parsed.pageSize).toBe(DEFAULT_PAGE_SIZE);
  });
});

describe("hash routing", () => {
  it("gallery routes round-trip, so a full reload reproduces the view", () => {
    const route: GalleryRoute = {
      view: "gallery",
      eventId: "synth-0007",
      filters: { ...defaultFilters(), orientation: "rear_left", page: 2 },
    };
    const hash = routeToHash(route);
    expect(parseHash(hash)).toEqual(route);
    expect(routeToHash(parseHash(hash))).toBe(hash);
  });

  it("detail routes round-trip", () => {
    const hash = routeToHash({ view: "detail", eventId: "e1", photoId: "ph001" });
    expect(parseHash(hash)).toEqual({ view: "detail", eventId: "e1", photoId: "ph001" });
  });

  it("unknown hashes fall back to home", () => {
    expect(parseHash("")).toEqual({ view: "home" });
    expect(parseHash("#/bogus/route")).toEqual({ view: "home" });
  });

  it("encodes awkward ids", () => {
    const route: GalleryRoute = {
      view: "gallery",
      eventId: "ev ent/1",
      filters: defaultFilters(),
    };
    expect(parseHash(routeToHash(route))).toEqual(route);
  });
});

describe("withFilter", () => {
  const route: GalleryRoute = {
    view: "gallery",
    eventId: "e1",
    filters: { ...defaultFilters(), team: "11", page: 4 },
  };

  it("sets the filter and resets paging", () => {
    const next = withFilter(route, "orientation", "left");
    expect(next.filters.orientation).toBe("left");
    expect(next.filters.team).toBe("11");
    expect(next.filters.page).toBe(1);
  });

  it("clears a filter when value is undefined", () => {
    const next = withFilter(route, "team", undefined);
    expect(next.filters.team).toBeUndefined();
  });
});
