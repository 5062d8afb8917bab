package pp.battleship.view;

import pp.battleship.model.ShipMap;

/**
 * Two dimensional view of a ship map, used for the opponent's map.
 */
class MapView {
    private final ShipMap map;
    private final Node mapNode = new Node("map");

    MapView(ShipMap map) {
        this.map = map;
        addGrid();
    }

    private void addGrid() {
        for (int x = 0; x <= map.getWidth(); x++)
            mapNode.attachChild(new Line(x, 0, x, map.getHeight()));
    }

    Node getNode() {
        return mapNode;
    }

    Runnable refresher() {
        return new Runnable() {
            @Override
            public void run() {
                mapNode.detachAllChildren();
                addGrid();
            }
        };
    }

    static class Cell {
        final int x;
        final int y;

        Cell(int x, int y) {
            this.x = x;
            this.y = y;
        }

        boolean isOrigin() {
            return x == 0 && y == 0;
        }
    }
}
