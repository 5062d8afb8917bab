package pp.battleship;

import java.util.ResourceBundle;

/**
 * Main class of the Battleship client.
 */
public class BattleshipApp extends SimpleApplication {
    private static final ResourceBundle BUNDLE = ResourceBundle.getBundle("battleship");
    private final DialogManager dialogManager = new DialogManager(this);

    public static void main(String[] args) {
        new BattleshipApp().start();
    }

    @Override
    public void simpleInitApp() {
        getStateManager().attach(new GameSound());
        getInputManager().addListener(new ActionListener() {
            @Override
            public void onAction(String name, boolean isPressed, float tpf) {
                if (isPressed && "ESC".equals(name))
                    new Menu(BattleshipApp.this).open();
            }
        }, "ESC");
    }

    public DialogManager getDialogManager() {
        return dialogManager;
    }

    public void closeApp() {
        stop();
    }

    static String lookup(String key) {
        return BUNDLE.getString(key);
    }
}
